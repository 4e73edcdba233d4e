
from typing import List, Sequence, Tuple

import numpy as np

from src.domain.entities import Box, LtrbTargets

# Aritmética de caixas alinhadas aos eixos: IoU, parametrização ltrb, centerness e NMS.
# Todas as funções são puras.


def iou(a: Box, b: Box) -> float:
    """IoU entre duas caixas; 0 quando a união é nula."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def boxes_to_array(boxes: Sequence[Box]) -> np.ndarray:
    if len(boxes) == 0:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([box.to_list() for box in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """IoU par a par entre arrays N x 4 e M x 4, com a mesma convenção de `iou`."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def ltrb_encode(location: Tuple[float, float], box: Box) -> LtrbTargets:
    x, y = location
    return LtrbTargets(l=x - box.x0, t=y - box.y0, r=box.x1 - x, b=box.y1 - y)


def ltrb_decode(location: Tuple[float, float], targets: LtrbTargets) -> Box:
    x, y = location
    return Box(x - targets.l, y - targets.t, x + targets.r, y + targets.b)


def centerness_target(targets: LtrbTargets) -> float:
    """sqrt((min(l,r)/max(l,r)) * (min(t,b)/max(t,b))); 0 se algum máximo for nulo."""
    max_lr = max(targets.l, targets.r)
    max_tb = max(targets.t, targets.b)
    if max_lr <= 0 or max_tb <= 0:
        return 0.0
    ratio = (min(targets.l, targets.r) / max_lr) * (min(targets.t, targets.b) / max_tb)
    return float(np.sqrt(max(ratio, 0.0)))


def score_order(scores: Sequence[float]) -> np.ndarray:
    """Índices por score decrescente; empates pelo menor índice original."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.lexsort((np.arange(scores.size), -scores))


def nms(boxes: Sequence[Box], scores: Sequence[float], iou_thr: float) -> List[int]:
    """Supressão não máxima gulosa. Retorna os índices mantidos em ordem de score decrescente."""
    if len(boxes) != len(scores):
        raise ValueError(f"nms recebeu {len(boxes)} caixas e {len(scores)} scores.")
    if not 0.0 <= iou_thr <= 1.0:
        raise ValueError(f"Limiar de IoU fora de [0, 1]: {iou_thr}.")
    if len(boxes) == 0:
        return []
    order = score_order(scores)
    overlaps = iou_matrix(boxes_to_array(boxes), boxes_to_array(boxes))
    suppressed = np.zeros(len(boxes), dtype=bool)
    keep: List[int] = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= overlaps[i] > iou_thr
    return keep
