
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.domain.config import ModelConfig
from src.domain.diffcore import Gradients
from src.domain.entities import (
    Box,
    Checkpoint,
    Detection,
    OptimizerState,
    ParamTensor,
    PgtBox,
    Proposal,
    RefinementSupervision,
    Vocabulary,
)
from src.domain.errors import CheckpointMismatchError
from src.domain.features import (
    dafe,
    dafe_backward,
    dropout_mask,
    extract,
    extract_backward,
    fuse,
    proposal_mlp,
    proposal_mlp_backward,
    roi_pool,
    roi_pool_backward,
)
from src.domain.geometry import boxes_to_array
from src.domain.milheads import (
    BranchOutput,
    TextEmbeddingTable,
    accumulate_refinement,
    build_embeddings,
    decode_deltas,
    inference,
    loss_ir,
    loss_om,
    mining_backward,
    mining_scores,
    pgt_assign,
    refine_scores,
    regress,
)
from src.domain.proposals import (
    assign_pg_targets,
    decode_proposals,
    loss_pg,
    lowsrpn_backward,
    lowsrpn_forward,
    merge_proposals,
)

logger = logging.getLogger(__name__)

MODULES = ("extractor", "rpn", "mlp", "dafe", "mining", "refine")
ALL_TERMS = frozenset({"pg", "om", "ir"})
PROPOSAL_SOURCES = ("learned", "segmenter", "merged")


def module_of(tensor_name: str) -> str:
    return tensor_name.split(".", 1)[0]


def module_grad_norms(grads: Mapping[str, np.ndarray]) -> Dict[str, float]:
    """Norma L2 do gradiente por módulo; módulos sem gradiente ficam com 0."""
    squares = {name: 0.0 for name in MODULES}
    for name, value in grads.items():
        squares[module_of(name)] += float(np.sum(value * value))
    return {name: float(np.sqrt(total)) for name, total in squares.items()}


@dataclass
class TrainingSample:
    """O que o aprendiz vê de uma imagem de treino: pixels, rótulos de imagem e o acesso
    ao segmentador (propostas por grade e refinamento por caixa)."""
    image_id: int
    image: np.ndarray
    labels: np.ndarray
    segmenter_proposals: Sequence[Proposal] = ()
    refine_seed: Optional[Callable[[Box], Box]] = None


@dataclass
class ForwardPlan:
    """Escolhas discretas ou destacadas de um passo: propostas, supervisão dos ramos, PGT e
    máscara de dropout. Reutilizar o plano torna a perda uma função suave dos parâmetros."""
    proposals: List[Proposal]
    supervision: Optional[List[RefinementSupervision]] = None
    pgt: Optional[List[PgtBox]] = None
    dropout: Optional[np.ndarray] = None

    @property
    def boxes(self) -> np.ndarray:
        return boxes_to_array([p.box for p in self.proposals])


@dataclass
class LossResult:
    losses: Dict[str, float]
    plan: ForwardPlan
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))


def full_image_proposal(height: int, width: int) -> Proposal:
    return Proposal(box=Box(0.0, 0.0, float(width), float(height)), score=1.0, source="image")


class WsovodModel:
    """Detector completo: extrator, LO-WSRPN, MLP de propostas, DAFE, mineração e ramos de
    refinamento. Os parâmetros vivem em `params`, indexados pelo nome do tensor."""

    def __init__(
        self,
        config: ModelConfig,
        vocabulary: Vocabulary,
        params: Optional[Dict[str, ParamTensor]] = None,
        seed: int = 0,
    ):
        self.config = config
        self.vocabulary = vocabulary
        self.embeddings = build_embeddings(vocabulary, config.embed_dim, config.embedding_seed)
        self.params = params if params is not None else self.initialize(seed)

    # --- Parâmetros ---

    def parameter_shapes(self) -> Dict[str, Tuple[int, ...]]:
        cfg = self.config
        patch = cfg.stride * cfg.stride * 3
        pooled = cfg.bins * cfg.bins * cfg.d_feat
        shapes = {
            "extractor.W": (patch, cfg.d_feat),
            "extractor.b": (cfg.d_feat,),
            "rpn.conv.W": (9 * cfg.d_feat, cfg.rpn_width),
            "rpn.conv.b": (cfg.rpn_width,),
            "rpn.p.W": (cfg.rpn_width, 1),
            "rpn.p.b": (1,),
            "rpn.c.W": (cfg.rpn_width, 1),
            "rpn.c.b": (1,),
            "rpn.t.W": (cfg.rpn_width, 4),
            "rpn.t.b": (4,),
            "mlp.fc1.W": (pooled, cfg.embed_dim),
            "mlp.fc1.b": (cfg.embed_dim,),
            "mlp.fc2.W": (cfg.embed_dim, cfg.embed_dim),
            "mlp.fc2.b": (cfg.embed_dim,),
        }
        if cfg.dafe_on:
            shapes.update({
                "dafe.fc1.W": (cfg.d_feat, cfg.dafe_hidden),
                "dafe.fc1.b": (cfg.dafe_hidden,),
                "dafe.fc2.W": (cfg.dafe_hidden, cfg.num_prototypes),
                "dafe.fc2.b": (cfg.num_prototypes,),
                "dafe.prototypes": (cfg.num_prototypes, cfg.embed_dim),
            })
        shapes["mining.det.W"] = (cfg.embed_dim, len(self.vocabulary))
        shapes["mining.det.b"] = (len(self.vocabulary),)
        for k in range(1, cfg.num_branches + 1):
            shapes[f"refine.{k}.reg.W"] = (cfg.embed_dim, 4)
            shapes[f"refine.{k}.reg.b"] = (4,)
        return shapes

    def initialize(self, seed: int) -> Dict[str, ParamTensor]:
        """Pesos gaussianos escalados pelo fan-in; vieses nulos, exceto o de t (caixas iniciais
        de lado 4*stride). W^d começa nulo, o que deixa softmax_colunas(S^d) uniforme."""
        rng = np.random.default_rng(seed)
        params: Dict[str, ParamTensor] = {}
        for name, shape in self.parameter_shapes().items():
            if name.endswith(".b"):
                values = np.zeros(shape)
            elif name == "mining.det.W":
                values = np.zeros(shape)
            elif name == "dafe.prototypes":
                values = rng.normal(0.0, 0.1, size=shape)
            elif name.startswith("rpn.") and name != "rpn.conv.W":
                values = rng.normal(0.0, 0.01, size=shape)
            elif name.startswith("refine."):
                values = rng.normal(0.0, 0.001, size=shape)
            else:
                values = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
            params[name] = ParamTensor(name, values)
        params["rpn.t.b"].values[:] = np.log(2.0 * self.config.stride)
        return params

    def parameters(self) -> List[ParamTensor]:
        return list(self.params.values())

    def to_checkpoint(self, optimizer: Optional[OptimizerState] = None) -> Checkpoint:
        return Checkpoint(
            tensors={name: param.values.copy() for name, param in self.params.items()},
            config=self.config.model_dump(),
            vocabulary=list(self.vocabulary.names),
            optimizer=optimizer or OptimizerState(),
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, config: Optional[ModelConfig] = None) -> "WsovodModel":
        """Reconstrói o modelo validando cada tensor contra as dimensões da configuração."""
        config = config or ModelConfig(**checkpoint.config)
        model = cls(config, Vocabulary.from_names(checkpoint.vocabulary), params={})
        expected = model.parameter_shapes()
        for name in checkpoint.tensors:
            if name not in expected:
                raise CheckpointMismatchError(name, "tensor inesperado para a configuração do modelo")
        for name, shape in expected.items():
            if name not in checkpoint.tensors:
                raise CheckpointMismatchError(name, "tensor ausente no checkpoint")
            values = np.asarray(checkpoint.tensors[name], dtype=np.float64)
            if values.shape != shape:
                raise CheckpointMismatchError(name, f"formato {values.shape}, esperado {shape}")
            model.params[name] = ParamTensor(name, values.copy())
        return model

    def zero_grad(self):
        for param in self.params.values():
            param.zero_grad()

    # --- Caminho visual ---

    def _visual(self, image: np.ndarray):
        return extract(image, self.params, self.config.stride)

    def _proposal_features(self, fmap, boxes: Sequence[Box], dropout: Optional[np.ndarray]):
        pooled, pool_weights = roi_pool(fmap, boxes, self.config.bins)
        x_prop, mlp_cache = proposal_mlp(pooled, self.params, dropout)
        if self.config.dafe_on:
            dafe_out, dafe_cache = dafe(fmap, self.params)
            x_fuse = fuse(x_prop, dafe_out.x_daf)
        else:
            dafe_cache = None
            x_fuse = x_prop
        return x_fuse, (pool_weights, mlp_cache, dafe_cache)

    def _features_backward(self, d_x_fuse: np.ndarray, fmap, cache, grads: Optional[Gradients]) -> np.ndarray:
        pool_weights, mlp_cache, dafe_cache = cache
        d_fmap = np.zeros_like(fmap.values)
        if dafe_cache is not None:
            d_fmap += dafe_backward(d_x_fuse.sum(axis=0), dafe_cache, grads)
        d_pooled = proposal_mlp_backward(d_x_fuse, mlp_cache, grads)
        return d_fmap + roi_pool_backward(d_pooled, pool_weights, fmap)

    def _branches(self, x_fuse: np.ndarray, embeddings: TextEmbeddingTable):
        probabilities, score_cache = refine_scores(x_fuse, embeddings, self.config.temperature)
        outputs, reg_caches = [], []
        for k in range(1, self.config.num_branches + 1):
            deltas, reg_cache = regress(x_fuse, self.params, k)
            outputs.append(BranchOutput(probabilities=probabilities, deltas=deltas))
            reg_caches.append(reg_cache)
        return outputs, score_cache, reg_caches

    # --- Propostas ---

    def training_proposals(self, preds, sample: TrainingSample, source: str) -> List[Proposal]:
        if source not in PROPOSAL_SOURCES:
            raise ValueError(f"Fonte de propostas desconhecida: '{source}'.")
        learned = decode_proposals(preds, self.config.num_proposals) if preds is not None else []
        segmenter = list(sample.segmenter_proposals) if source != "learned" else []
        proposals = merge_proposals(learned, segmenter, self.config.num_proposals)
        if not proposals:
            logger.warning("Imagem %s sem propostas; usando a caixa da imagem inteira.", sample.image_id)
            height, width = sample.image.shape[:2]
            proposals = [full_image_proposal(height, width)]
        return proposals

    def select_pgt(
        self,
        labels: np.ndarray,
        phi: np.ndarray,
        mining_s: np.ndarray,
        last_branch: BranchOutput,
        boxes: np.ndarray,
        image_size: Tuple[int, int],
        warmup: bool,
        score_floor: float,
    ) -> List[PgtBox]:
        """PGT para o gerador de propostas, destacada do grafo.

        No aquecimento vêm da mineração e só valem categorias com phi_c >= piso; depois,
        da caixa regredida de maior pontuação do último ramo por categoria presente.
        """
        pgt: List[PgtBox] = []
        regressed = decode_deltas(boxes, last_branch.deltas, image_size)
        for category in np.flatnonzero(np.asarray(labels) > 0):
            if warmup:
                if phi[category] < score_floor:
                    continue
                row = int(np.argmax(mining_s[:, category]))
                box = Box.from_list(boxes[row])
            else:
                row = int(np.argmax(last_branch.probabilities[:, category]))
                box = Box.from_list(regressed[row])
            if box.area > 0:
                pgt.append(PgtBox(box=box, category=int(category)))
        return pgt

    # --- Perda e gradientes ---

    def loss_and_grads(
        self,
        sample: TrainingSample,
        source: str = "merged",
        warmup: bool = False,
        plan: Optional[ForwardPlan] = None,
        terms: Iterable[str] = ALL_TERMS,
        grads: Optional[Gradients] = None,
        rng: Optional[np.random.Generator] = None,
        iou_fg: float = 0.5,
        pgt_score_floor: float = 0.1,
        backward: bool = True,
    ) -> LossResult:
        """L_WSOVOD = L_PG + L_OM + L_IR de uma imagem, com retropropagação opcional.

        `terms` escolhe as parcelas somadas em `total` e retropropagadas. Com `plan`
        fornecido, propostas, supervisão, PGT e dropout são reutilizados. Gradientes vão
        para `grads` (por nome de tensor) ou, sem buffer, para `ParamTensor.grad`.
        """
        terms = frozenset(terms)
        if not terms <= ALL_TERMS:
            raise ValueError(f"Parcelas de perda desconhecidas: {sorted(terms - ALL_TERMS)}.")
        image = np.asarray(sample.image, dtype=np.float64)
        labels = np.asarray(sample.labels)
        if labels.shape != (len(self.vocabulary),):
            raise ValueError(f"Rótulos com {labels.shape} para vocabulário de {len(self.vocabulary)} categorias.")
        image_size = image.shape[:2]

        fmap, extract_cache = self._visual(image)
        use_rpn = source != "segmenter"
        preds, rpn_cache = lowsrpn_forward(fmap, self.params) if use_rpn else (None, None)

        if plan is None:
            plan = ForwardPlan(proposals=self.training_proposals(preds, sample, source))
            if self.config.dropout_on and rng is not None:
                plan.dropout = dropout_mask(rng, (len(plan.proposals), self.config.embed_dim), self.config.dropout_rate)
        boxes = plan.boxes

        x_fuse, feature_cache = self._proposal_features(fmap, [p.box for p in plan.proposals], plan.dropout)

        det = (self.params["mining.det.W"], self.params["mining.det.b"])
        scores, mining_cache = mining_scores(x_fuse, self.embeddings, det[0], det[1], self.config.temperature)
        l_om, d_phi = loss_om(scores.phi, labels)

        outputs, score_cache, reg_caches = self._branches(x_fuse, self.embeddings)
        if plan.supervision is None:
            supervision = [pgt_assign(scores.s, boxes, labels, iou_fg, sample.refine_seed)]
            for previous in outputs[:-1]:
                supervision.append(pgt_assign(previous.probabilities[:, :-1], boxes, labels, iou_fg))
            plan.supervision = supervision
        l_ir, branch_grads, _ = loss_ir(outputs, plan.supervision, boxes)

        l_pg, pg_grads = 0.0, None
        if use_rpn:
            if plan.pgt is None:
                plan.pgt = self.select_pgt(labels, scores.phi, scores.s, outputs[-1], boxes, image_size, warmup, pgt_score_floor)
            targets = assign_pg_targets(plan.pgt, preds.grid, preds.stride)
            l_pg, pg_grads = loss_pg(preds, targets)

        losses = {"pg": l_pg, "om": l_om, "ir": l_ir}
        losses["total"] = sum(losses[name] for name in sorted(terms))
        if not backward:
            return LossResult(losses=losses, plan=plan, phi=scores.phi)

        d_x_fuse = np.zeros_like(x_fuse)
        if "om" in terms:
            d_x_fuse = d_x_fuse + mining_backward(d_phi, mining_cache, grads)
        if "ir" in terms:
            d_x_fuse = accumulate_refinement(d_x_fuse, branch_grads, [score_cache] * len(outputs), reg_caches, grads)
        d_fmap = np.zeros_like(fmap.values)
        if terms & {"om", "ir"}:
            d_fmap += self._features_backward(d_x_fuse, fmap, feature_cache, grads)
        if "pg" in terms and use_rpn:
            d_fmap += lowsrpn_backward(*pg_grads, preds, rpn_cache, grads)
        extract_backward(d_fmap, extract_cache, grads)
        return LossResult(losses=losses, plan=plan, phi=scores.phi)

    # --- Inferência ---

    def propose(
        self,
        image: np.ndarray,
        source: str,
        segmenter_proposals: Sequence[Proposal] = (),
        limit: Optional[int] = None,
    ) -> List[Proposal]:
        """Conjunto de propostas fora do treino. `merged` é todo o segmentador mais as `limit`
        melhores aprendidas, sem remover duplicatas entre fontes: contém o conjunto `learned`
        do mesmo limite elemento a elemento."""
        if source not in PROPOSAL_SOURCES:
            raise ValueError(f"Fonte de propostas desconhecida: '{source}'.")
        limit = limit or self.config.num_proposals
        learned: List[Proposal] = []
        if source != "segmenter":
            fmap, _ = self._visual(np.asarray(image, dtype=np.float64))
            preds, _ = lowsrpn_forward(fmap, self.params)
            learned = decode_proposals(preds, limit)
        if source == "learned":
            return learned
        if source == "segmenter":
            return list(segmenter_proposals)
        return list(segmenter_proposals) + learned

    def detect(
        self,
        image_id: int,
        image: np.ndarray,
        embeddings: Optional[TextEmbeddingTable] = None,
        max_detections: int = 100,
    ) -> List[Detection]:
        """Detecções de uma imagem com o vocabulário de `embeddings` (padrão: o de treino).

        Usa só as propostas aprendidas: o segmentador oráculo lê a verdade-terreno da cena.
        """
        embeddings = embeddings or self.embeddings
        image = np.asarray(image, dtype=np.float64)
        proposals = self.propose(image, "learned")
        if not proposals:
            proposals = [full_image_proposal(*image.shape[:2])]
        fmap, _ = self._visual(image)
        x_fuse, _ = self._proposal_features(fmap, [p.box for p in proposals], None)
        outputs, _, _ = self._branches(x_fuse, embeddings)
        boxes = boxes_to_array([p.box for p in proposals])
        return inference(image_id, outputs, boxes, image.shape[:2], max_detections=max_detections)
