
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.diffcore import (
    Gradients,
    accumulate,
    affine_backward,
    affine_forward,
    relu,
    relu_backward,
    tanh_backward,
)
from src.domain.entities import Box, FeatureMap, ParamTensor
from src.domain.errors import ShapeMismatchError
from src.domain.geometry import boxes_to_array

# Caminho visual: extrator por embedding de patches (X^img), RoI pooling, MLP de propostas
# de duas camadas (X^prop) e o extrator sensível ao conjunto de dados, DAFE (X^daf),
# com a fusão X^fuse = X^prop + X^daf.

Params = Mapping[str, ParamTensor]


# --- Extrator ---

def patchify(image: np.ndarray, stride: int) -> np.ndarray:
    height, width, channels = image.shape
    if height % stride or width % stride:
        raise ShapeMismatchError(image.shape, (stride, stride), "imagem não é múltipla do stride")
    rows, cols = height // stride, width // stride
    patches = image.reshape(rows, stride, cols, stride, channels).transpose(0, 2, 1, 3, 4)
    return patches.reshape(rows * cols, stride * stride * channels)


def extract(image: np.ndarray, params: Params, stride: int) -> Tuple[FeatureMap, tuple]:
    """Cada patch stride x stride x 3 vira um vetor D_feat por um afim aprendível seguido de relu."""
    image = np.asarray(image, dtype=np.float64)
    rows, cols = image.shape[0] // stride, image.shape[1] // stride
    pre, affine_cache = affine_forward(patchify(image, stride), params["extractor.W"], params["extractor.b"])
    values = relu(pre).reshape(rows, cols, -1)
    return FeatureMap(values=values, stride=stride), (pre, affine_cache)


def extract_backward(d_values: np.ndarray, cache: tuple, grads: Optional[Gradients] = None):
    pre, affine_cache = cache
    affine_backward(relu_backward(d_values.reshape(pre.shape), pre), affine_cache, grads)


# --- RoI pooling ---

def _bin_cells(start: float, end: float, limit: int) -> np.ndarray:
    """Células cujo centro cai em [start, end); célula mais próxima quando o bin é sub-célula."""
    first = int(np.ceil(start - 0.5))
    last = int(np.ceil(end - 0.5))
    cells = np.arange(max(first, 0), min(last, limit))
    if cells.size == 0:
        nearest = int(np.clip(np.floor(0.5 * (start + end)), 0, limit - 1))
        cells = np.array([nearest])
    return cells


def roi_pool_weights(boxes: np.ndarray, grid: Tuple[int, int], stride: int, bins: int) -> np.ndarray:
    """Matriz de pooling R x (G*G) x (H'*W'): cada linha faz a média das células do bin."""
    rows, cols = grid
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    weights = np.zeros((boxes.shape[0], bins * bins, rows * cols))
    for r, (x0, y0, x1, y1) in enumerate(boxes / stride):
        if x1 <= x0 or y1 <= y0:
            continue
        bw, bh = (x1 - x0) / bins, (y1 - y0) / bins
        for i in range(bins):
            ys = _bin_cells(y0 + i * bh, y0 + (i + 1) * bh, rows)
            for j in range(bins):
                xs = _bin_cells(x0 + j * bw, x0 + (j + 1) * bw, cols)
                cells = (ys[:, None] * cols + xs[None, :]).reshape(-1)
                weights[r, i * bins + j, cells] = 1.0 / cells.size
    return weights


def roi_pool(fmap: FeatureMap, boxes: Sequence[Box], bins: int) -> Tuple[np.ndarray, np.ndarray]:
    """Vetores G*G*D_feat por caixa (bins concatenados); caixa vazia dá vetor zero."""
    weights = roi_pool_weights(boxes_to_array(boxes), fmap.grid, fmap.stride, bins)
    flat = fmap.values.reshape(-1, fmap.channels)
    pooled = np.einsum("rgk,kd->rgd", weights, flat)
    return pooled.reshape(len(boxes), bins * bins * fmap.channels), weights


def roi_pool_backward(d_pooled: np.ndarray, weights: np.ndarray, fmap: FeatureMap) -> np.ndarray:
    d = d_pooled.reshape(weights.shape[0], weights.shape[1], fmap.channels)
    return np.einsum("rgk,rgd->kd", weights, d).reshape(fmap.values.shape)


# --- MLP de propostas ---

def proposal_mlp(pooled: np.ndarray, params: Params, dropout_mask: Optional[np.ndarray] = None) -> Tuple[np.ndarray, tuple]:
    """afim -> tanh (-> dropout) -> afim -> tanh, linha a linha."""
    a1, c1 = affine_forward(pooled, params["mlp.fc1.W"], params["mlp.fc1.b"])
    h1 = np.tanh(a1)
    h1_drop = h1 * dropout_mask if dropout_mask is not None else h1
    a2, c2 = affine_forward(h1_drop, params["mlp.fc2.W"], params["mlp.fc2.b"])
    out = np.tanh(a2)
    return out, (c1, h1, dropout_mask, c2, out)


def proposal_mlp_backward(d_out: np.ndarray, cache: tuple, grads: Optional[Gradients] = None) -> np.ndarray:
    c1, h1, dropout_mask, c2, out = cache
    d_h1_drop = affine_backward(tanh_backward(d_out, out), c2, grads)
    d_h1 = d_h1_drop * dropout_mask if dropout_mask is not None else d_h1_drop
    return affine_backward(tanh_backward(d_h1, h1), c1, grads)


def dropout_mask(rng: np.random.Generator, shape: Tuple[int, ...], rate: float) -> np.ndarray:
    """Máscara invertida: unidades mantidas escaladas por 1/(1-rate)."""
    return (rng.random(shape) >= rate) / (1.0 - rate)


# --- DAFE ---

@dataclass
class DafeOutput:
    coefficients: np.ndarray
    x_daf: np.ndarray


def dafe(fmap: FeatureMap, params: Params) -> Tuple[DafeOutput, tuple]:
    """g = média espacial; alpha = tanh(afim2(relu(afim1(g)))); X^daf = alpha^T P."""
    g = fmap.values.mean(axis=(0, 1))
    a1, c1 = affine_forward(g, params["dafe.fc1.W"], params["dafe.fc1.b"])
    h = relu(a1)
    a2, c2 = affine_forward(h, params["dafe.fc2.W"], params["dafe.fc2.b"])
    alpha = np.tanh(a2)
    prototypes = params["dafe.prototypes"]
    if prototypes.shape[0] != alpha.shape[0]:
        raise ShapeMismatchError(alpha.shape, prototypes.shape, "coeficientes DAFE x protótipos")
    x_daf = alpha @ prototypes.values
    return DafeOutput(coefficients=alpha, x_daf=x_daf), (fmap.values.shape, c1, a1, c2, alpha, prototypes)


def dafe_backward(d_x_daf: np.ndarray, cache: tuple, grads: Optional[Gradients] = None) -> np.ndarray:
    """Devolve dL/d(mapa de características)."""
    fmap_shape, c1, a1, c2, alpha, prototypes = cache
    accumulate(grads, prototypes, np.outer(alpha, d_x_daf))
    d_alpha = prototypes.values @ d_x_daf
    d_h = affine_backward(tanh_backward(d_alpha, alpha), c2, grads)
    d_g = affine_backward(relu_backward(d_h, a1), c1, grads)
    cells = fmap_shape[0] * fmap_shape[1]
    return np.broadcast_to(d_g / cells, fmap_shape).copy()


def fuse(x_prop: np.ndarray, x_daf: np.ndarray) -> np.ndarray:
    if x_prop.shape[-1] != x_daf.shape[-1]:
        raise ShapeMismatchError(x_prop.shape, x_daf.shape, "fusão X^prop + X^daf")
    return x_prop + x_daf[None, :]
