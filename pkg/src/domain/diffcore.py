
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, MutableMapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.entities import LtrbTargets, ParamTensor, SgdConfig
from src.domain.errors import GradCheckError, ShapeMismatchError

# Substrato numérico diferenciável: mapas afins, ativações, softmax por linha/coluna,
# primitivas de perda, SGD com momento e verificador de gradiente por diferenças finitas.
# Os gradientes são derivados à mão; a corretude é estabelecida pelo verificador.
# Float64 em todo o caminho.

BCE_EPS = 1e-7
GRAD_CHECK_FLOOR = 1e-4

Gradients = MutableMapping[str, np.ndarray]


def accumulate(grads: Optional[Gradients], param: ParamTensor, value: np.ndarray):
    """Soma `value` no gradiente do tensor: no buffer `grads` se houver, senão em `param.grad`."""
    if value.shape != param.values.shape:
        raise ShapeMismatchError(value.shape, param.values.shape, f"gradiente de '{param.name}'")
    if grads is None:
        param.grad += value
    elif param.name in grads:
        grads[param.name] = grads[param.name] + value
    else:
        grads[param.name] = value.copy()


# --- Camadas ---

def affine_forward(x: np.ndarray, weight: ParamTensor, bias: ParamTensor) -> Tuple[np.ndarray, tuple]:
    """y = xW + b para vetor (D,) ou matriz (N, D)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeMismatchError(x.shape, weight.shape, f"afim '{weight.name}'")
    return x @ weight.values + bias.values, (x, weight, bias)


def affine_backward(dy: np.ndarray, cache: tuple, grads: Optional[Gradients] = None) -> np.ndarray:
    x, weight, bias = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    accumulate(grads, weight, x2.T @ dy2)
    accumulate(grads, bias, dy2.sum(axis=0))
    return (dy2 @ weight.values.T).reshape(x.shape)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    return dy * (x > 0.0)


def tanh_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


def sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * y * (1.0 - y)


def softmax_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(m - m.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def softmax_cols(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    e = np.exp(m - m.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def softmax_backward(ds: np.ndarray, s: np.ndarray, axis: int) -> np.ndarray:
    return s * (ds - (ds * s).sum(axis=axis, keepdims=True))


def l2_normalize_rows(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Normaliza linhas; linhas de norma zero ficam zero (cosseno definido como 0)."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return np.where(norms > 0, x / safe, 0.0), norms


def l2_normalize_rows_backward(dxhat: np.ndarray, xhat: np.ndarray, norms: np.ndarray) -> np.ndarray:
    safe = np.where(norms > 0, norms, 1.0)
    dx = (dxhat - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)) / safe
    return np.where(norms > 0, dx, 0.0)


# --- Perdas ---

def bce(p, y):
    """-[y log p + (1-y) log(1-p)] com p limitado a [eps, 1-eps]; elemento a elemento."""
    p = np.clip(np.asarray(p, dtype=np.float64), BCE_EPS, 1.0 - BCE_EPS)
    y = np.asarray(y, dtype=np.float64)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def bce_grad(p, y) -> np.ndarray:
    """dL/dp; zero onde o limite ativo corta p."""
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = (p > BCE_EPS) & (p < 1.0 - BCE_EPS)
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    return np.where(inside, -y / pc + (1.0 - y) / (1.0 - pc), 0.0)


def smooth_l1(x: np.ndarray, target: np.ndarray) -> float:
    d = np.asarray(x, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    ad = np.abs(d)
    return float(np.where(ad < 1.0, 0.5 * d * d, ad - 0.5).sum())


def smooth_l1_grad(x: np.ndarray, target: np.ndarray) -> np.ndarray:
    d = np.asarray(x, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return np.clip(d, -1.0, 1.0)


def iou_loss_batch(t: np.ndarray, t_star: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """1 - IoU entre caixas decodificadas na mesma localização, linhas (l, t, r, b).

    Retorna (perdas N, dL/dt N x 4). Diferenciável em t; t* é constante.
    """
    t = np.asarray(t, dtype=np.float64).reshape(-1, 4)
    ts = np.asarray(t_star, dtype=np.float64).reshape(-1, 4)
    l, top, r, b = t[:, 0], t[:, 1], t[:, 2], t[:, 3]
    ls, tops, rs, bs = ts[:, 0], ts[:, 1], ts[:, 2], ts[:, 3]

    pred_area = (l + r) * (top + b)
    target_area = (ls + rs) * (tops + bs)
    iw = np.minimum(l, ls) + np.minimum(r, rs)
    ih = np.minimum(top, tops) + np.minimum(b, bs)
    inter = iw * ih
    union = pred_area + target_area - inter
    safe_union = np.where(union > 0, union, 1.0)
    ratio = np.where(union > 0, inter / safe_union, 0.0)
    losses = 1.0 - ratio

    # dI/dt e dU/dt; o mínimo escolhe a predição quando t < t*.
    d_inter = np.stack(
        [ih * (l < ls), iw * (top < tops), ih * (r < rs), iw * (b < bs)], axis=1
    )
    d_area = np.stack([top + b, l + r, top + b, l + r], axis=1)
    d_union = d_area - d_inter
    d_ratio = (d_inter * safe_union[:, None] - inter[:, None] * d_union) / (safe_union[:, None] ** 2)
    grad = np.where((union > 0)[:, None], -d_ratio, 0.0)
    return losses, grad


def iou_loss(t: LtrbTargets, t_star: LtrbTargets) -> float:
    losses, _ = iou_loss_batch(t.as_array(), t_star.as_array())
    return float(losses[0])


# --- Otimização ---

class SgdOptimizer:
    """SGD com momento e decaimento de peso: v <- m v + g + wd w; w <- w - lr v."""

    def __init__(self, config: SgdConfig, velocity: Optional[Dict[str, np.ndarray]] = None):
        self.config = config
        self.velocity: Dict[str, np.ndarray] = dict(velocity or {})

    def step(self, params: Sequence[ParamTensor], learning_rate: Optional[float] = None):
        lr = self.config.learning_rate if learning_rate is None else learning_rate
        for param in params:
            v = self.velocity.get(param.name)
            if v is None:
                v = np.zeros_like(param.values)
            v = self.config.momentum * v + param.grad + self.config.weight_decay * param.values
            self.velocity[param.name] = v
            param.values -= lr * v
            param.zero_grad()


def sgd_step(params: Sequence[ParamTensor], config: SgdConfig, velocity: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, np.ndarray]:
    """Um passo de SGD; devolve o estado de momento atualizado."""
    optimizer = SgdOptimizer(config, velocity)
    optimizer.step(params)
    return optimizer.velocity


# --- Verificação de gradiente ---

@dataclass
class TensorCheck:
    name: str
    max_rel_error: float
    worst_index: Tuple[int, ...]
    analytic: float
    numeric: float
    coords_checked: int


@dataclass
class GradCheckReport:
    tolerance: float
    tensors: List[TensorCheck] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((t.max_rel_error for t in self.tensors), default=0.0)

    @property
    def failures(self) -> List[TensorCheck]:
        return [t for t in self.tensors if not t.max_rel_error < self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failures


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), GRAD_CHECK_FLOOR)


def grad_check(
    loss_fn: Callable[[], float],
    params: Sequence[ParamTensor],
    analytic: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    tolerance: float = 1e-4,
    num_coords: int = 64,
    seed: int = 0,
) -> GradCheckReport:
    """Compara gradientes analíticos com diferenças centrais numa subamostra de coordenadas.

    `loss_fn` deve ler os valores atuais de `params`; cada coordenada é perturbada no lugar e
    restaurada em seguida. Tensores ausentes de `analytic` são tratados como gradiente zero.
    """
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tolerance)
    for param in params:
        flat = param.values.reshape(-1)
        expected = np.asarray(analytic.get(param.name, np.zeros_like(param.values))).reshape(-1)
        if flat.size <= num_coords:
            coords = np.arange(flat.size)
        else:
            coords = np.sort(rng.choice(flat.size, size=num_coords, replace=False))
        worst = TensorCheck(param.name, 0.0, (), 0.0, 0.0, int(coords.size))
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + eps
            plus = loss_fn()
            flat[coord] = original - eps
            minus = loss_fn()
            flat[coord] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise GradCheckError(f"Perda não finita ao perturbar '{param.name}' na coordenada {int(coord)}.")
            numeric = (plus - minus) / (2.0 * eps)
            error = relative_error(float(expected[coord]), float(numeric))
            if error >= worst.max_rel_error:
                worst = TensorCheck(
                    param.name,
                    error,
                    tuple(int(i) for i in np.unravel_index(int(coord), param.shape)),
                    float(expected[coord]),
                    float(numeric),
                    int(coords.size),
                )
        report.tensors.append(worst)
    return report
