
import hashlib
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.diffcore import (
    Gradients,
    affine_backward,
    affine_forward,
    bce,
    bce_grad,
    l2_normalize_rows,
    l2_normalize_rows_backward,
    smooth_l1,
    smooth_l1_grad,
    softmax_backward,
    softmax_cols,
    softmax_rows,
)
from src.domain.entities import Box, Detection, ParamTensor, RefinementSupervision, ScoreMatrices, Vocabulary
from src.domain.errors import ShapeMismatchError
from src.domain.geometry import iou_matrix, nms

# Rede MIL sincronizada proposta-conceito: mineração de objetos sobre embeddings textuais,
# K ramos de refinamento com classificador de embeddings + fundo nulo, propagação de PGT
# entre ramos e pontuação de inferência.

MIN_BOX_SIDE = 1.0
MAX_LOG_SCALE = np.log(1000.0 / 16.0)
INFERENCE_NMS_IOU = 0.3
INFERENCE_SCORE_FLOOR = 0.01


# --- Embeddings textuais ---

@dataclass
class TextEmbeddingTable:
    """T: D x C com colunas unitárias, uma por nome de categoria."""
    matrix: np.ndarray
    names: List[str]

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def num_categories(self) -> int:
        return int(self.matrix.shape[1])

    def refinement_classifier(self) -> np.ndarray:
        """W^r = [T, 0]: a coluna de fundo é o vetor nulo."""
        return np.concatenate([self.matrix, np.zeros((self.dim, 1))], axis=1)


def name_embedding(name: str, dim: int, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    vector = rng.standard_normal(dim)
    return vector / np.linalg.norm(vector)


def mix_embeddings(weights: Sequence[float], columns: np.ndarray) -> np.ndarray:
    """Combinação normalizada das colunas de `columns` (D x k) com os pesos dados."""
    mixed = np.asarray(columns, dtype=np.float64) @ np.asarray(weights, dtype=np.float64)
    norm = np.linalg.norm(mixed)
    if norm == 0:
        raise ValueError("Mistura de embeddings com norma nula.")
    return mixed / norm


def build_embeddings(vocabulary: Vocabulary, dim: int, seed: int = 0) -> TextEmbeddingTable:
    """Tabela determinística por (nomes, semente).

    Categorias base recebem um vetor pseudoaleatório semeado por hash(semente, nome).
    Categorias novas recebem a mistura normalizada dos vetores base com os mesmos pesos
    da sua aparência.
    """
    names = [spec.name for spec in vocabulary]
    if len(set(names)) != len(names):
        raise ValueError("Nomes de categoria duplicados no vocabulário.")
    columns = []
    for spec in vocabulary:
        if spec.is_novel:
            parts = list(spec.mixture.items())
            base = np.stack([name_embedding(name, dim, seed) for name, _ in parts], axis=1)
            columns.append(mix_embeddings([w for _, w in parts], base))
        else:
            columns.append(name_embedding(spec.name, dim, seed))
    matrix = np.stack(columns, axis=1) if columns else np.zeros((dim, 0))
    return TextEmbeddingTable(matrix=matrix, names=names)


def cosine_logits(x: np.ndarray, table: np.ndarray, temperature: float) -> Tuple[np.ndarray, tuple]:
    """cos(x_r, T_c) / tau; linhas de norma zero dão cosseno 0."""
    x_hat, norms = l2_normalize_rows(x)
    return x_hat @ table / temperature, (x_hat, norms, table, temperature)


def cosine_logits_backward(d_logits: np.ndarray, cache: tuple) -> np.ndarray:
    x_hat, norms, table, temperature = cache
    return l2_normalize_rows_backward(d_logits @ table.T / temperature, x_hat, norms)


# --- Mineração de objetos ---

def mining_scores(
    x_fuse: np.ndarray,
    embeddings: TextEmbeddingTable,
    weight: ParamTensor,
    bias: ParamTensor,
    temperature: float,
) -> Tuple[ScoreMatrices, tuple]:
    """S^c = cos/tau, S^d = xW^d + b, S = softmax_linhas(S^c) * softmax_colunas(S^d), phi = soma em r."""
    if x_fuse.shape[0] < 1:
        raise ValueError("A mineração exige ao menos uma proposta.")
    if weight.shape[1] != embeddings.num_categories:
        raise ShapeMismatchError(weight.shape, embeddings.matrix.shape, "W^d x tabela de embeddings")
    s_c, cos_cache = cosine_logits(x_fuse, embeddings.matrix, temperature)
    s_d, d_cache = affine_forward(x_fuse, weight, bias)
    rows = softmax_rows(s_c)
    cols = softmax_cols(s_d)
    s = rows * cols
    scores = ScoreMatrices(s_c=s_c, s_d=s_d, s=s, phi=s.sum(axis=0))
    return scores, (cos_cache, d_cache, rows, cols)


def mining_backward(d_phi: np.ndarray, cache: tuple, grads: Optional[Gradients] = None) -> np.ndarray:
    """Devolve dL/dX^fuse dado dL/dphi."""
    cos_cache, d_cache, rows, cols = cache
    d_s = np.broadcast_to(d_phi, rows.shape)
    d_s_c = softmax_backward(d_s * cols, rows, axis=1)
    d_s_d = softmax_backward(d_s * rows, cols, axis=0)
    return cosine_logits_backward(d_s_c, cos_cache) + affine_backward(d_s_d, d_cache, grads)


def loss_om(phi: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Soma de BCE(phi_c, y_c) sobre as categorias; devolve também dL/dphi."""
    phi = np.asarray(phi, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if phi.shape != labels.shape:
        raise ShapeMismatchError(phi.shape, labels.shape, "phi x y")
    return float(bce(phi, labels).sum()), bce_grad(phi, labels)


# --- Propagação de PGT ---

def pgt_assign(
    prev_scores: np.ndarray,
    proposal_boxes: np.ndarray,
    labels: np.ndarray,
    iou_fg: float = 0.5,
    refine_seed: Optional[Callable[[Box], Box]] = None,
) -> RefinementSupervision:
    """Supervisão de um ramo a partir das pontuações do ramo anterior.

    Para cada categoria presente, a semente é a proposta de maior pontuação (empate: menor
    índice). Propostas com IoU >= iou_fg a uma semente herdam rótulo, peso e caixa alvo da
    semente de maior IoU; a própria semente sempre recebe sua categoria. As demais são fundo
    com o maior peso de semente da imagem (1.0 se não houver sementes).
    """
    prev_scores = np.asarray(prev_scores, dtype=np.float64)
    num_proposals, num_categories = prev_scores.shape
    proposal_boxes = np.asarray(proposal_boxes, dtype=np.float64).reshape(-1, 4)
    if proposal_boxes.shape[0] != num_proposals:
        raise ShapeMismatchError(proposal_boxes.shape, prev_scores.shape, "propostas x pontuações")

    result_labels = np.full(num_proposals, num_categories, dtype=np.int64)
    weights = np.zeros(num_proposals)
    targets = np.zeros((num_proposals, 4))
    best_overlap = np.full(num_proposals, -1.0)

    seeds = []
    for category in np.flatnonzero(np.asarray(labels) > 0):
        row = int(np.argmax(prev_scores[:, category]))
        seed_box = proposal_boxes[row]
        if refine_seed is not None:
            seed_box = np.asarray(refine_seed(Box.from_list(seed_box)).to_list())
        seeds.append((row, int(category), seed_box, float(prev_scores[row, category])))

    for row, category, seed_box, weight in seeds:
        overlaps = iou_matrix(proposal_boxes, seed_box[None, :])[:, 0]
        hit = (overlaps >= iou_fg) & (overlaps > best_overlap)
        result_labels[hit] = category
        weights[hit] = weight
        targets[hit] = seed_box
        best_overlap[hit] = overlaps[hit]
    for row, category, seed_box, weight in seeds:
        result_labels[row] = category
        weights[row] = weight
        targets[row] = seed_box

    background = result_labels == num_categories
    weights[background] = max((seed[3] for seed in seeds), default=1.0)
    return RefinementSupervision(labels=result_labels, weights=weights, targets=targets, num_categories=num_categories)


# --- Refinamento ---

def refine_scores(x_fuse: np.ndarray, embeddings: TextEmbeddingTable, temperature: float) -> Tuple[np.ndarray, tuple]:
    """Probabilidades R x (C+1) com o classificador W^r = [T, 0]."""
    logits, cache = cosine_logits(x_fuse, embeddings.refinement_classifier(), temperature)
    return softmax_rows(logits), cache


def refine_backward(d_logits: np.ndarray, cache: tuple) -> np.ndarray:
    return cosine_logits_backward(d_logits, cache)


def encode_deltas(proposals: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """(dx, dy, dlog w, dlog h) do alvo relativo à proposta."""
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 4)
    pw = np.maximum(proposals[:, 2] - proposals[:, 0], MIN_BOX_SIDE)
    ph = np.maximum(proposals[:, 3] - proposals[:, 1], MIN_BOX_SIDE)
    tw = np.maximum(targets[:, 2] - targets[:, 0], MIN_BOX_SIDE)
    th = np.maximum(targets[:, 3] - targets[:, 1], MIN_BOX_SIDE)
    px = 0.5 * (proposals[:, 0] + proposals[:, 2])
    py = 0.5 * (proposals[:, 1] + proposals[:, 3])
    tx = 0.5 * (targets[:, 0] + targets[:, 2])
    ty = 0.5 * (targets[:, 1] + targets[:, 3])
    return np.stack([(tx - px) / pw, (ty - py) / ph, np.log(tw / pw), np.log(th / ph)], axis=1)


def decode_deltas(proposals: np.ndarray, deltas: np.ndarray, image_size: Tuple[int, int]) -> np.ndarray:
    proposals = np.asarray(proposals, dtype=np.float64).reshape(-1, 4)
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1, 4)
    height, width = image_size
    pw = np.maximum(proposals[:, 2] - proposals[:, 0], MIN_BOX_SIDE)
    ph = np.maximum(proposals[:, 3] - proposals[:, 1], MIN_BOX_SIDE)
    cx = 0.5 * (proposals[:, 0] + proposals[:, 2]) + deltas[:, 0] * pw
    cy = 0.5 * (proposals[:, 1] + proposals[:, 3]) + deltas[:, 1] * ph
    w = pw * np.exp(np.minimum(deltas[:, 2], MAX_LOG_SCALE))
    h = ph * np.exp(np.minimum(deltas[:, 3], MAX_LOG_SCALE))
    boxes = np.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], axis=1)
    boxes[:, 0::2] = np.clip(boxes[:, 0::2], 0.0, width)
    boxes[:, 1::2] = np.clip(boxes[:, 1::2], 0.0, height)
    return boxes


def regress(x_fuse: np.ndarray, params: Mapping[str, ParamTensor], branch: int) -> Tuple[np.ndarray, tuple]:
    return affine_forward(x_fuse, params[f"refine.{branch}.reg.W"], params[f"refine.{branch}.reg.b"])


@dataclass
class BranchOutput:
    probabilities: np.ndarray  # R x (C+1)
    deltas: np.ndarray  # R x 4


@dataclass
class BranchGradients:
    d_logits: np.ndarray
    d_deltas: np.ndarray


def loss_ir(
    branches: Sequence[BranchOutput],
    supervision: Sequence[RefinementSupervision],
    proposal_boxes: np.ndarray,
) -> Tuple[float, List[BranchGradients], Dict[str, float]]:
    """Soma sobre ramos de CE ponderada (média em R) + smooth L1 média nos positivos.

    Devolve a perda total, gradientes por ramo (em relação aos logits e às deltas) e as
    parcelas de classificação e regressão.
    """
    if len(branches) != len(supervision):
        raise ValueError(f"{len(branches)} ramos para {len(supervision)} supervisões.")
    total_cls, total_reg = 0.0, 0.0
    gradients: List[BranchGradients] = []
    for output, target in zip(branches, supervision):
        probs = output.probabilities
        rows = probs.shape[0]
        picked = probs[np.arange(rows), target.labels]
        total_cls += float((target.weights * -np.log(np.maximum(picked, 1e-300))).sum() / rows)
        one_hot = np.zeros_like(probs)
        one_hot[np.arange(rows), target.labels] = 1.0
        d_logits = (target.weights / rows)[:, None] * (probs - one_hot)

        d_deltas = np.zeros_like(output.deltas)
        foreground = target.foreground
        if foreground.any():
            count = max(1, int(foreground.sum()))
            wanted = encode_deltas(proposal_boxes[foreground], target.targets[foreground])
            total_reg += smooth_l1(output.deltas[foreground], wanted) / count
            d_deltas[foreground] = smooth_l1_grad(output.deltas[foreground], wanted) / count
        gradients.append(BranchGradients(d_logits=d_logits, d_deltas=d_deltas))
    return total_cls + total_reg, gradients, {"cls": total_cls, "reg": total_reg}


# --- Inferência ---

def inference(
    image_id: int,
    branches: Sequence[BranchOutput],
    proposal_boxes: np.ndarray,
    image_size: Tuple[int, int],
    score_floor: float = INFERENCE_SCORE_FLOOR,
    nms_iou: float = INFERENCE_NMS_IOU,
    max_detections: int = 100,
) -> List[Detection]:
    """Média dos K ramos sem a coluna de fundo, caixas do último ramo, NMS por categoria."""
    if not branches or len(proposal_boxes) == 0:
        return []
    scores = np.mean([branch.probabilities[:, :-1] for branch in branches], axis=0)
    boxes = decode_deltas(proposal_boxes, branches[-1].deltas, image_size)
    box_list = [Box.from_list(row) for row in boxes]
    candidates: List[Detection] = []
    for category in range(scores.shape[1]):
        column = scores[:, category]
        eligible = np.flatnonzero(column >= score_floor)
        if eligible.size == 0:
            continue
        kept = nms([box_list[i] for i in eligible], column[eligible], nms_iou)
        for index in kept:
            row = int(eligible[index])
            candidates.append(Detection(image_id=image_id, box=box_list[row], category=category, confidence=float(column[row])))
    candidates.sort(key=lambda det: (-det.confidence, det.category, det.box.to_list()))
    return candidates[:max_detections]


def accumulate_refinement(
    x_fuse_grad: np.ndarray,
    branch_grads: Sequence[BranchGradients],
    score_caches: Sequence[tuple],
    reg_caches: Sequence[tuple],
    grads: Optional[Gradients] = None,
) -> np.ndarray:
    """Retropropaga todos os ramos até X^fuse, somando em `x_fuse_grad`."""
    for branch_grad, score_cache, reg_cache in zip(branch_grads, score_caches, reg_caches):
        x_fuse_grad = x_fuse_grad + refine_backward(branch_grad.d_logits, score_cache)
        x_fuse_grad = x_fuse_grad + affine_backward(branch_grad.d_deltas, reg_cache, grads)
    return x_fuse_grad
