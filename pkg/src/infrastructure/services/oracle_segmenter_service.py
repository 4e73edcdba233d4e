import logging
from typing import List

from src.application.interfaces import ISegmenterService
from src.domain.entities import Box, ImageRecord, Proposal
from src.domain.proposals import oracle_box_refine, oracle_grid_proposals

logger = logging.getLogger(__name__)

# Implementação concreta do segmentador: um oráculo que consulta a verdade-terreno oculta do
# registro. Ele faz o papel de um segmentador de propósito geral (consulta por pontos de grade
# ou por caixa) sem nenhum modelo externo.


class OracleSegmenterService(ISegmenterService):
    """Implementação do serviço de segmentação baseada na verdade-terreno.

    As saídas são determinísticas por (semente, conjunto de dados, imagem).
    """

    def __init__(
        self,
        grid: int = 8,
        jitter: float = 0.1,
        refine_iou_floor: float = 0.3,
        refine_jitter: float = 0.02,
        seed: int = 0,
    ):
        """
        Inicializa o serviço com os parâmetros do oráculo.

        Args:
            grid (int): Lado g da grade de pontos de consulta.
            jitter (float): Ruído dos cantos como fração do lado do objeto.
            refine_iou_floor (float): IoU mínimo para o refinamento devolver um objeto.
            refine_jitter (float): Ruído dos cantos no refinamento por caixa.
            seed (int): Semente base do ruído.
        """
        if grid < 1:
            raise ValueError("A grade do segmentador precisa ter lado >= 1.")
        self.grid = grid
        self.jitter = jitter
        self.refine_iou_floor = refine_iou_floor
        self.refine_jitter = refine_jitter
        self.seed = seed

    def _seed_for(self, record: ImageRecord) -> int:
        return ((int(self.seed) & 0xFFFFFFFF) << 8) + int(record.dataset_id)

    def grid_proposals(self, record: ImageRecord) -> List[Proposal]:
        return oracle_grid_proposals(record.scene(), self.grid, self.jitter, seed=self._seed_for(record))

    def refine_box(self, record: ImageRecord, query: Box) -> Box:
        return oracle_box_refine(
            record.scene(),
            query,
            iou_floor=self.refine_iou_floor,
            jitter=self.refine_jitter,
            seed=self._seed_for(record),
        )
