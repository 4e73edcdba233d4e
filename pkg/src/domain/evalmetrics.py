
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.entities import Detection, MetricReport, ObjectInstance, Proposal, Vocabulary
from src.domain.geometry import boxes_to_array, iou_matrix, score_order

# Métricas de detecção: CorLoc, AP no protocolo VOC (todos os pontos ou 11 pontos),
# AP médio em IoU 0.5:0.95 e recall médio de propostas AR@N.

GroundTruth = Mapping[int, Sequence[ObjectInstance]]

IOU_RANGE: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
AR_LIMITS: Tuple[int, ...] = (10, 100, 1000)
INTERPOLATIONS = ("all_points", "eleven_point")


def _sorted_detections(detections: Iterable[Detection]) -> List[Detection]:
    # ordem total: o resultado não depende da ordem de entrada
    return sorted(detections, key=lambda d: (-d.confidence, d.image_id, d.category, d.box.to_list()))


def categories_with_ground_truth(ground_truth: GroundTruth) -> List[int]:
    return sorted({obj.category for objects in ground_truth.values() for obj in objects})


def precision_recall(
    detections: Sequence[Detection],
    ground_truth: GroundTruth,
    category: int,
    iou_thr: float,
) -> Tuple[np.ndarray, np.ndarray, int]:
    """Curva precisão-recall de uma categoria com casamento guloso.

    Cada detecção, da mais confiante para a menos, casa com o GT ainda livre de maior IoU
    (>= iou_thr) na mesma imagem; empate pelo menor índice de GT.
    """
    gt_boxes: Dict[int, np.ndarray] = {}
    for image_id, objects in ground_truth.items():
        boxes = [obj.box for obj in objects if obj.category == category]
        if boxes:
            gt_boxes[image_id] = boxes_to_array(boxes)
    num_gt = sum(len(b) for b in gt_boxes.values())
    matched = {image_id: np.zeros(len(b), dtype=bool) for image_id, b in gt_boxes.items()}

    ranked = [d for d in _sorted_detections(detections) if d.category == category]
    tp = np.zeros(len(ranked))
    for index, det in enumerate(ranked):
        boxes = gt_boxes.get(det.image_id)
        if boxes is None:
            continue
        overlaps = iou_matrix(boxes_to_array([det.box]), boxes)[0]
        overlaps[matched[det.image_id]] = -1.0
        best = int(np.argmax(overlaps))
        if overlaps[best] >= iou_thr:
            matched[det.image_id][best] = True
            tp[index] = 1.0
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    recall = tp_cum / max(num_gt, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, np.finfo(np.float64).eps)
    return recall, precision, num_gt


def ap_from_curve(recall: np.ndarray, precision: np.ndarray, interpolation: str = "all_points") -> float:
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"Interpolação desconhecida: '{interpolation}'.")
    if recall.size == 0:
        return 0.0
    if interpolation == "eleven_point":
        ap = 0.0
        for t in np.arange(0.0, 1.1, 0.1):
            p = float(np.max(precision[recall >= t])) if np.any(recall >= t) else 0.0
            ap += p / 11.0
        return float(ap)
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    # envelope de precisão
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    i = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def voc_ap(
    detections: Sequence[Detection],
    ground_truth: GroundTruth,
    iou_thr: float = 0.5,
    interpolation: str = "all_points",
    categories: Optional[Iterable[int]] = None,
) -> Dict[int, float]:
    """AP por categoria; categorias sem GT ficam de fora."""
    present = set(categories_with_ground_truth(ground_truth))
    wanted = sorted(present if categories is None else present & set(categories))
    result = {}
    for category in wanted:
        recall, precision, _ = precision_recall(detections, ground_truth, category, iou_thr)
        result[category] = ap_from_curve(recall, precision, interpolation)
    return result


def mean_of(values: Iterable[float]) -> float:
    values = list(values)
    return float(np.mean(values)) if values else 0.0


def ap_range(
    detections: Sequence[Detection],
    ground_truth: GroundTruth,
    categories: Optional[Iterable[int]] = None,
) -> float:
    """mAP (todos os pontos) médio sobre IoU em {0.50, 0.55, ..., 0.95}."""
    categories = None if categories is None else list(categories)
    return mean_of(mean_of(voc_ap(detections, ground_truth, thr, "all_points", categories).values()) for thr in IOU_RANGE)


def corloc(
    detections: Sequence[Detection],
    ground_truth: GroundTruth,
    categories: Optional[Iterable[int]] = None,
    iou_thr: float = 0.5,
) -> float:
    """Média, sobre categorias, da fração de imagens positivas cuja detecção mais confiante
    da categoria acerta algum GT da mesma categoria."""
    top: Dict[Tuple[int, int], Detection] = {}
    for det in _sorted_detections(detections):
        top.setdefault((det.image_id, det.category), det)

    present = categories_with_ground_truth(ground_truth)
    wanted = present if categories is None else [c for c in present if c in set(categories)]
    per_category = []
    for category in wanted:
        hits, images = 0, 0
        for image_id, objects in ground_truth.items():
            boxes = [obj.box for obj in objects if obj.category == category]
            if not boxes:
                continue
            images += 1
            det = top.get((image_id, category))
            if det is not None and iou_matrix(boxes_to_array([det.box]), boxes_to_array(boxes)).max() >= iou_thr:
                hits += 1
        per_category.append(hits / images)
    return mean_of(per_category)


def recall_at(
    proposals: Mapping[int, Sequence[Proposal]],
    ground_truth: GroundTruth,
    limit: int,
    iou_thr: float,
) -> float:
    """Fração de GTs cobertos (IoU >= iou_thr) por alguma das `limit` melhores propostas da imagem."""
    if limit < 1:
        raise ValueError("N deve ser >= 1.")
    covered, total = 0, 0
    for image_id, objects in ground_truth.items():
        if not objects:
            continue
        total += len(objects)
        candidates = list(proposals.get(image_id, ()))
        if not candidates:
            continue
        order = score_order([p.score for p in candidates])[:limit]
        kept = boxes_to_array([candidates[i].box for i in order])
        overlaps = iou_matrix(boxes_to_array([obj.box for obj in objects]), kept)
        covered += int((overlaps.max(axis=1) >= iou_thr).sum())
    return covered / total if total else 0.0


def avg_recall(
    proposals: Mapping[int, Sequence[Proposal]],
    ground_truth: GroundTruth,
    limit: int,
    iou_thrs: Sequence[float] = IOU_RANGE,
) -> float:
    return mean_of(recall_at(proposals, ground_truth, limit, thr) for thr in iou_thrs)


def split_categories(vocabulary: Vocabulary, split: str) -> List[int]:
    if split == "base":
        return vocabulary.base_indices
    if split == "novel":
        return vocabulary.novel_indices
    if split == "all":
        return list(range(len(vocabulary)))
    raise ValueError(f"Divisão desconhecida: '{split}' (use base, novel ou all).")


def build_report(
    detections: Sequence[Detection],
    ground_truth: GroundTruth,
    vocabulary: Vocabulary,
    split: str = "all",
    proposals: Optional[Mapping[int, Sequence[Proposal]]] = None,
    interpolation: str = "all_points",
) -> MetricReport:
    """Relatório completo restrito às categorias da divisão pedida.

    `split_ap` traz o mAP de cada divisão (base, novel, all) que tenha GT; divisões sem
    categorias avaliáveis ficam ausentes.
    """
    selected = split_categories(vocabulary, split)
    per_category = voc_ap(detections, ground_truth, 0.5, interpolation, selected)
    report = MetricReport(
        per_category_ap={vocabulary[c].name: ap for c, ap in per_category.items()},
        mean_ap=mean_of(per_category.values()),
        corloc=corloc(detections, ground_truth, selected),
        ap_range=ap_range(detections, ground_truth, selected),
    )
    for name in ("base", "novel", "all"):
        aps = voc_ap(detections, ground_truth, 0.5, interpolation, split_categories(vocabulary, name))
        if aps:
            report.split_ap[name] = mean_of(aps.values())
    if proposals is not None:
        for limit in AR_LIMITS:
            report.average_recall[limit] = avg_recall(proposals, ground_truth, limit)
            report.recall_at_50[limit] = recall_at(proposals, ground_truth, limit, 0.5)
    return report
