
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.diffcore import (
    Gradients,
    affine_backward,
    affine_forward,
    bce,
    bce_grad,
    iou_loss_batch,
    relu,
    relu_backward,
    sigmoid,
)
from src.domain.entities import Box, FeatureMap, LocationPredictions, ParamTensor, PgtBox, Proposal, Scene
from src.domain.geometry import boxes_to_array, centerness_target, iou, iou_matrix, ltrb_encode, score_order

# Gerador de propostas orientado a localização (LO-WSRPN), atribuição de alvos a partir de
# caixas PGT, perda do gerador, segmentador oráculo (substituto determinístico do SAM) e
# fusão de propostas.

Params = Mapping[str, ParamTensor]

MAX_SHAPE_LOGIT = 8.0
DUPLICATE_IOU = 0.95


def cell_centers(grid: Tuple[int, int], stride: int) -> np.ndarray:
    """Centros das células em pixels, ordem linha-major, array (H'*W') x 2 com (x, y)."""
    rows, cols = grid
    ys, xs = np.meshgrid((np.arange(rows) + 0.5) * stride, (np.arange(cols) + 0.5) * stride, indexing="ij")
    return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)


# --- Cabeça LO-WSRPN ---

def _im2col3x3(values: np.ndarray) -> np.ndarray:
    rows, cols, channels = values.shape
    padded = np.pad(values, ((1, 1), (1, 1), (0, 0)))
    shifted = [padded[dy:dy + rows, dx:dx + cols, :] for dy in range(3) for dx in range(3)]
    return np.concatenate(shifted, axis=2).reshape(rows * cols, 9 * channels)


def _col2im3x3(d_cols: np.ndarray, shape: Tuple[int, int, int]) -> np.ndarray:
    rows, cols, channels = shape
    d_cols = d_cols.reshape(rows, cols, 9, channels)
    d_padded = np.zeros((rows + 2, cols + 2, channels))
    for k in range(9):
        dy, dx = divmod(k, 3)
        d_padded[dy:dy + rows, dx:dx + cols, :] += d_cols[:, :, k, :]
    return d_padded[1:-1, 1:-1, :]


def lowsrpn_forward(fmap: FeatureMap, params: Params) -> Tuple[LocationPredictions, tuple]:
    """Convolução 3x3 compartilhada + relu, depois três cabeças 1x1: sigmoide->p, sigmoide->c, exp->t."""
    rows, cols = fmap.grid
    columns = _im2col3x3(fmap.values)
    pre, conv_cache = affine_forward(columns, params["rpn.conv.W"], params["rpn.conv.b"])
    hidden = relu(pre)
    p_logit, p_cache = affine_forward(hidden, params["rpn.p.W"], params["rpn.p.b"])
    c_logit, c_cache = affine_forward(hidden, params["rpn.c.W"], params["rpn.c.b"])
    t_logit, t_cache = affine_forward(hidden, params["rpn.t.W"], params["rpn.t.b"])
    clipped = t_logit > MAX_SHAPE_LOGIT
    t = np.exp(np.minimum(t_logit, MAX_SHAPE_LOGIT))
    p = sigmoid(p_logit[:, 0])
    c = sigmoid(c_logit[:, 0])
    preds = LocationPredictions(
        p=p.reshape(rows, cols),
        c=c.reshape(rows, cols),
        t=t.reshape(rows, cols, 4),
        stride=fmap.stride,
        image_size=(rows * fmap.stride, cols * fmap.stride),
    )
    return preds, (fmap.values.shape, conv_cache, pre, p_cache, c_cache, t_cache, clipped)


def lowsrpn_backward(
    d_p_logit: np.ndarray,
    d_c_logit: np.ndarray,
    d_t: np.ndarray,
    preds: LocationPredictions,
    cache: tuple,
    grads: Optional[Gradients] = None,
) -> np.ndarray:
    """Recebe dL/d(logit p), dL/d(logit c) e dL/dt (em pixels); devolve dL/d(mapa)."""
    shape, conv_cache, pre, p_cache, c_cache, t_cache, clipped = cache
    t = preds.t.reshape(-1, 4)
    d_t_logit = np.where(clipped, 0.0, d_t.reshape(-1, 4) * t)
    d_hidden = affine_backward(d_p_logit.reshape(-1, 1), p_cache, grads)
    d_hidden = d_hidden + affine_backward(d_c_logit.reshape(-1, 1), c_cache, grads)
    d_hidden = d_hidden + affine_backward(d_t_logit, t_cache, grads)
    d_columns = affine_backward(relu_backward(d_hidden, pre), conv_cache, grads)
    return _col2im3x3(d_columns, shape)


def decode_proposals(preds: LocationPredictions, top_n: int) -> List[Proposal]:
    """Caixa por célula a partir de t, recortada à imagem, com score s = sqrt(c * p)."""
    if top_n < 1:
        raise ValueError("top_n deve ser >= 1.")
    height, width = preds.image_size
    centers = cell_centers(preds.grid, preds.stride)
    t = preds.t.reshape(-1, 4)
    scores = np.sqrt(preds.c.reshape(-1) * preds.p.reshape(-1))
    proposals = []
    for index in score_order(scores)[:top_n]:
        x, y = centers[index]
        l, top, r, b = t[index]
        box = Box(x - l, y - top, x + r, y + b).clip(width, height)
        proposals.append(Proposal(box=box, score=float(scores[index]), source="lowsrpn"))
    return proposals


# --- Alvos e perda do gerador ---

@dataclass
class PgTargets:
    positive: np.ndarray  # bool, H'*W'
    centerness: np.ndarray  # c*, válido em positivos
    shape: np.ndarray  # t*, H'*W' x 4, válido em positivos
    assigned: np.ndarray  # índice da caixa PGT ou -1

    @property
    def num_positive(self) -> int:
        return int(self.positive.sum())


def assign_pg_targets(pgt: Sequence[PgtBox], grid: Tuple[int, int], stride: int) -> PgTargets:
    """Célula positiva sse seu centro está no interior de alguma caixa PGT; entre as caixas que
    a contêm, vence a de menor área (empate: menor índice)."""
    centers = cell_centers(grid, stride)
    cells = centers.shape[0]
    positive = np.zeros(cells, dtype=bool)
    centerness = np.zeros(cells)
    shape = np.zeros((cells, 4))
    assigned = np.full(cells, -1, dtype=np.int64)
    for cell, (x, y) in enumerate(centers):
        best, best_area = -1, np.inf
        for index, item in enumerate(pgt):
            box = item.box
            if box.x0 < x < box.x1 and box.y0 < y < box.y1 and box.area < best_area:
                best, best_area = index, box.area
        if best < 0:
            continue
        targets = ltrb_encode((x, y), pgt[best].box)
        positive[cell] = True
        assigned[cell] = best
        centerness[cell] = centerness_target(targets)
        shape[cell] = targets.as_array()
    return PgTargets(positive=positive, centerness=centerness, shape=shape, assigned=assigned)


def loss_pg(preds: LocationPredictions, targets: PgTargets) -> Tuple[float, Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """BCE média em todas as células + média nos positivos de |c - c*| + (1 - IoU(t, t*)).

    Devolve a perda e (dL/d logit p, dL/d logit c, dL/dt).
    """
    p = preds.p.reshape(-1)
    c = preds.c.reshape(-1)
    t = preds.t.reshape(-1, 4)
    cells = p.size
    p_star = targets.positive.astype(np.float64)

    loss = float(bce(p, p_star).mean())
    d_p_logit = bce_grad(p, p_star) / cells * p * (1.0 - p)
    d_c_logit = np.zeros(cells)
    d_t = np.zeros((cells, 4))

    positives = np.flatnonzero(targets.positive)
    if positives.size:
        n = positives.size
        diff = c[positives] - targets.centerness[positives]
        iou_losses, iou_grads = iou_loss_batch(t[positives], targets.shape[positives])
        loss += float((np.abs(diff) + iou_losses).sum() / n)
        cp = c[positives]
        d_c_logit[positives] = np.sign(diff) / n * cp * (1.0 - cp)
        d_t[positives] = iou_grads / n
    return loss, (d_p_logit, d_c_logit, d_t)


# --- Segmentador oráculo ---

def _topmost_object(scene: Scene, x: float, y: float) -> Optional[int]:
    for index in range(len(scene.objects) - 1, -1, -1):
        box = scene.objects[index].box
        if box.x0 <= x < box.x1 and box.y0 <= y < box.y1:
            return index
    return None


def _jitter_box(box: Box, sigma: float, rng: np.random.Generator, width: float, height: float) -> Box:
    if sigma <= 0:
        return box
    dx = rng.uniform(-sigma, sigma, size=2) * box.width
    dy = rng.uniform(-sigma, sigma, size=2) * box.height
    xs = sorted((box.x0 + dx[0], box.x1 + dx[1]))
    ys = sorted((box.y0 + dy[0], box.y1 + dy[1]))
    return Box(xs[0], ys[0], xs[1], ys[1]).clip(width, height)


def dedupe(proposals: Sequence[Proposal], threshold: float = DUPLICATE_IOU) -> List[Proposal]:
    kept: List[Proposal] = []
    for proposal in proposals:
        if all(iou(proposal.box, other.box) <= threshold for other in kept):
            kept.append(proposal)
    return kept


def oracle_grid_proposals(scene: Scene, grid: int, jitter: float, seed: int = 0) -> List[Proposal]:
    """Sonda a cena com g x g pontos: cada ponto dentro de um objeto emite a caixa do objeto
    (o mais acima na ordem de pintura) com ruído nos cantos; duplicatas são removidas."""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, int(scene.seed) & 0xFFFFFFFF, 31])
    emitted: List[Proposal] = []
    for i in range(grid):
        for j in range(grid):
            x = (j + 0.5) * scene.width / grid
            y = (i + 0.5) * scene.height / grid
            index = _topmost_object(scene, x, y)
            if index is None:
                continue
            box = _jitter_box(scene.objects[index].box, jitter, rng, scene.width, scene.height)
            emitted.append(Proposal(box=box, score=1.0, source="segmenter"))
    return dedupe(emitted)


def oracle_box_refine(scene: Scene, query: Box, iou_floor: float = 0.3, jitter: float = 0.02, seed: int = 0) -> Box:
    """Caixa de verdade-terreno de maior IoU com a consulta, se IoU >= piso; senão a própria consulta."""
    if not scene.objects:
        return query
    overlaps = [iou(query, obj.box) for obj in scene.objects]
    best = int(np.argmax(overlaps))
    if overlaps[best] < iou_floor:
        return query
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, int(scene.seed) & 0xFFFFFFFF, 37] + [int(round(v * 16)) & 0xFFFFFFFF for v in query.to_list()])
    return _jitter_box(scene.objects[best].box, jitter, rng, scene.width, scene.height)


def merge_proposals(
    learned: Sequence[Proposal],
    segmenter: Sequence[Proposal],
    cap: int,
    inference: bool = False,
) -> List[Proposal]:
    """Propostas do segmentador primeiro, depois as aprendidas por s decrescente, até `cap`.

    Duplicatas entre fontes (IoU > 0.95) mantêm a cópia do segmentador. Em inferência,
    apenas as aprendidas.
    """
    if cap < 1:
        raise ValueError("cap deve ser >= 1.")
    ordered_learned = [learned[i] for i in score_order([p.score for p in learned])]
    if inference:
        return ordered_learned[:cap]
    merged = list(segmenter[:cap])
    if len(merged) < cap and ordered_learned:
        if merged:
            overlaps = iou_matrix(boxes_to_array([p.box for p in ordered_learned]), boxes_to_array([p.box for p in merged]))
            duplicate = (overlaps > DUPLICATE_IOU).any(axis=1)
        else:
            duplicate = np.zeros(len(ordered_learned), dtype=bool)
        for proposal, is_duplicate in zip(ordered_learned, duplicate):
            if len(merged) >= cap:
                break
            if not is_duplicate:
                merged.append(proposal)
    return merged
