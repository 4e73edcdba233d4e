import logging
from typing import Dict, List, Optional

from src.application.interfaces import ICheckpointRepository, IDatasetRepository, IReportWriter, ISegmenterService
from src.domain.evalmetrics import AR_LIMITS, IOU_RANGE, mean_of, recall_at
from src.domain.model import PROPOSAL_SOURCES, WsovodModel

logger = logging.getLogger(__name__)

RECALL_HEADER = ("source", "n", "recall_50", "ar")


class EvaluateRecallUseCase:
    """Caso de uso para o recall de propostas AR@N por fonte (aprendida, segmentador, conjunta).

    A fonte conjunta em N é todo o segmentador mais as N melhores aprendidas, portanto contém a
    fonte aprendida em N.
    """

    def __init__(
        self,
        dataset_repository: IDatasetRepository,
        checkpoint_repository: ICheckpointRepository,
        report_writer: IReportWriter,
        segmenter_service: ISegmenterService,
    ):
        self.dataset_repository = dataset_repository
        self.checkpoint_repository = checkpoint_repository
        self.report_writer = report_writer
        self.segmenter_service = segmenter_service

    def execute(self, ckpt: str, data: str, out: Optional[str] = None) -> List[Dict[str, object]]:
        """
        Calcula recall em IoU 0.5 e AR médio em 0.5:0.95 para N em {10, 100, 1000}.

        Args:
            ckpt (str): Caminho do checkpoint.
            data (str): Conjunto de dados com verdade-terreno.
            out (Optional[str]): CSV de saída; None para não gravar.

        Returns:
            List[Dict[str, object]]: Uma linha por (fonte, N).
        """
        model = WsovodModel.from_checkpoint(self.checkpoint_repository.load(ckpt))
        records, _ = self.dataset_repository.read(data)
        ground_truth = {record.image_id: list(record.ground_truth) for record in records}
        segmenter = {record.image_id: self.segmenter_service.grid_proposals(record) for record in records}

        rows: List[Dict[str, object]] = []
        for source in PROPOSAL_SOURCES:
            for limit in AR_LIMITS:
                proposals = {
                    record.image_id: model.propose(record.image, source, segmenter[record.image_id], limit=limit)
                    for record in records
                }
                # o conjunto já está cortado em N aprendidas; não truncar de novo o conjunto
                cut = limit if source != "merged" else max((len(p) for p in proposals.values()), default=1) or 1
                rows.append({
                    "source": source,
                    "n": limit,
                    "recall_50": recall_at(proposals, ground_truth, cut, 0.5),
                    "ar": mean_of(recall_at(proposals, ground_truth, cut, thr) for thr in IOU_RANGE),
                })
        if out:
            self.report_writer.write_table(out, RECALL_HEADER, rows)
        logger.info("Recall de propostas calculado para %d imagens.", len(records))
        return rows
