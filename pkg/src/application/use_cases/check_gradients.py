import logging
from collections import OrderedDict
from typing import Dict, Iterable, Optional

import numpy as np

from src.domain.config import ModelConfig
from src.domain.diffcore import GradCheckReport, grad_check
from src.domain.model import TrainingSample, WsovodModel
from src.domain.proposals import oracle_box_refine, oracle_grid_proposals
from src.domain.synthdata import OBJECT_CENTRIC, LabelPolicy, default_vocabulary, gen_scene, label_image, render

logger = logging.getLogger(__name__)

# Verificação de gradientes por diferenças finitas em uma micro-instância aleatória, para
# cada parcela da perda e para a perda composta.

CORRUPTION_OFFSET = 1.0
MICRO_IMAGE = 16

LOSSES: "OrderedDict[str, frozenset]" = OrderedDict([
    ("L_OM", frozenset({"om"})),
    ("L_IR", frozenset({"ir"})),
    ("L_PG", frozenset({"pg"})),
    ("L_WSOVOD", frozenset({"pg", "om", "ir"})),
])

MICRO_CONFIG = ModelConfig(
    image_size=MICRO_IMAGE,
    stride=4,
    d_feat=4,
    bins=2,
    embed_dim=6,
    num_prototypes=3,
    dafe_hidden=4,
    rpn_width=4,
    num_branches=2,
    num_proposals=4,
)


class CheckGradientsUseCase:
    """Caso de uso para verificar todos os gradientes analíticos contra diferenças centrais.

    Não depende de portas: a micro-instância é gerada em memória a partir da semente.
    """

    def __init__(self, config: ModelConfig = MICRO_CONFIG, num_categories: int = 3):
        self.config = config
        self.num_categories = num_categories

    def micro_instance(self, seed: int):
        vocabulary = default_vocabulary(self.num_categories)
        size = (self.config.image_size, self.config.image_size)
        scene = gen_scene(OBJECT_CENTRIC, vocabulary, seed, size=size)
        labels = label_image(scene, len(vocabulary), LabelPolicy.full())
        sample = TrainingSample(
            image_id=seed,
            image=render(scene, vocabulary),
            labels=labels,
            segmenter_proposals=oracle_grid_proposals(scene, grid=4, jitter=0.1, seed=seed),
            refine_seed=lambda box: oracle_box_refine(scene, box, seed=seed),
        )
        model = WsovodModel(self.config, vocabulary, seed=seed)
        return model, sample

    def execute(
        self,
        seed: int = 0,
        corrupt: Optional[str] = None,
        eps: float = 1e-5,
        tolerance: float = 1e-4,
        losses: Iterable[str] = tuple(LOSSES),
    ) -> Dict[str, GradCheckReport]:
        """
        Roda a verificação para cada perda pedida.

        Args:
            seed (int): Semente da micro-instância e da subamostra de coordenadas.
            corrupt (Optional[str]): Nome de um tensor cujo gradiente analítico recebe um
                deslocamento deliberado (gancho de injeção de falha).
            eps (float): Passo das diferenças centrais.
            tolerance (float): Erro relativo máximo aceito.
            losses (Iterable[str]): Subconjunto de L_OM, L_IR, L_PG, L_WSOVOD.

        Returns:
            Dict[str, GradCheckReport]: Relatório por perda.

        Raises:
            ValueError: Se o tensor a corromper ou a perda pedida não existirem.
        """
        model, sample = self.micro_instance(seed)
        if corrupt is not None and corrupt not in model.params:
            raise ValueError(f"Tensor desconhecido para corromper: '{corrupt}'.")
        reports: Dict[str, GradCheckReport] = {}
        for name in losses:
            if name not in LOSSES:
                raise ValueError(f"Perda desconhecida: '{name}'.")
            terms = LOSSES[name]
            analytic: Dict[str, np.ndarray] = {}
            result = model.loss_and_grads(sample, source="merged", terms=terms, grads=analytic)
            plan = result.plan
            if corrupt is not None:
                analytic[corrupt] = analytic.get(corrupt, np.zeros(model.params[corrupt].shape)) + CORRUPTION_OFFSET

            def loss_fn(terms=terms, plan=plan) -> float:
                return model.loss_and_grads(sample, source="merged", plan=plan, terms=terms, backward=False).losses["total"]

            reports[name] = grad_check(loss_fn, model.parameters(), analytic, eps=eps, tolerance=tolerance, seed=seed)
            logger.info("%s: erro relativo máximo %.3e.", name, reports[name].max_rel_error)
        return reports
