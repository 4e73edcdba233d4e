import logging
from typing import Dict, List, Optional, Tuple

from src.application.interfaces import ICheckpointRepository, IDatasetRepository, IReportWriter
from src.domain.entities import Detection, ImageRecord, MetricReport, ObjectInstance, Proposal, Vocabulary
from src.domain.evalmetrics import AR_LIMITS, build_report
from src.domain.milheads import build_embeddings
from src.domain.model import WsovodModel

logger = logging.getLogger(__name__)

# Avaliação em vocabulário aberto: o checkpoint é treinado com as categorias base e avaliado
# com qualquer vocabulário, inclusive categorias nunca vistas no treino.


def ground_truth_for(records: List[ImageRecord], data_vocabulary: Vocabulary, eval_vocabulary: Vocabulary) -> Dict[int, List[ObjectInstance]]:
    """Verdade-terreno indexada pelo vocabulário de avaliação; categorias fora dele são ignoradas."""
    names = data_vocabulary.names
    wanted = set(eval_vocabulary.names)
    ground_truth = {}
    for record in records:
        ground_truth[record.image_id] = [
            ObjectInstance(box=obj.box, category=eval_vocabulary.index_of(names[obj.category]), jitter=obj.jitter)
            for obj in record.ground_truth
            if names[obj.category] in wanted
        ]
    return ground_truth


class EvaluateModelUseCase:
    """Caso de uso para avaliar um checkpoint com o conjunto de métricas de detecção.

    A inferência usa só as propostas aprendidas; o segmentador oráculo fica restrito ao
    treino e ao relatório de recall, porque é construído a partir da verdade-terreno.
    """

    def __init__(
        self,
        dataset_repository: IDatasetRepository,
        checkpoint_repository: ICheckpointRepository,
        report_writer: IReportWriter,
    ):
        """
        Inicializa o caso de uso com as dependências necessárias.

        Args:
            dataset_repository (IDatasetRepository): Leitura do conjunto de avaliação e do vocabulário.
            checkpoint_repository (ICheckpointRepository): Leitura do checkpoint.
            report_writer (IReportWriter): Escrita dos relatórios CSV e JSON.
        """
        self.dataset_repository = dataset_repository
        self.checkpoint_repository = checkpoint_repository
        self.report_writer = report_writer

    def detect_all(
        self,
        model: WsovodModel,
        records: List[ImageRecord],
        vocabulary: Vocabulary,
        max_detections: int,
    ) -> Tuple[List[Detection], Dict[int, List[Proposal]]]:
        """Detecções e propostas por imagem; lê apenas `image_id` e `image` de cada registro."""
        embeddings = build_embeddings(vocabulary, model.config.embed_dim, model.config.embedding_seed)
        detections: List[Detection] = []
        proposals: Dict[int, List[Proposal]] = {}
        for record in records:
            detections.extend(model.detect(record.image_id, record.image, embeddings, max_detections))
            proposals[record.image_id] = model.propose(record.image, "learned", limit=max(AR_LIMITS))
        return detections, proposals

    def execute(
        self,
        ckpt: str,
        data: str,
        vocab: Optional[str] = None,
        split: str = "all",
        out_prefix: Optional[str] = None,
        interpolation: str = "all_points",
        max_detections: int = 100,
    ) -> MetricReport:
        """
        Avalia o checkpoint no conjunto de dados.

        Args:
            ckpt (str): Caminho do checkpoint.
            data (str): Caminho do conjunto de avaliação.
            vocab (Optional[str]): Arquivo de vocabulário; padrão é o vocabulário do próprio conjunto.
            split (str): Divisão de categorias do relatório: base, novel ou all.
            out_prefix (Optional[str]): Prefixo dos arquivos CSV/JSON; None para não gravar.
            interpolation (str): all_points ou eleven_point.
            max_detections (int): Máximo de detecções por imagem.

        Returns:
            MetricReport: Relatório com AP por categoria, mAP, CorLoc, AP@[.5:.95], AR@N e AP por divisão.

        Raises:
            ValueError: Se a divisão ou a interpolação forem inválidas.
            CheckpointMismatchError: Se os tensores não casarem com a configuração do modelo.
        """
        model = WsovodModel.from_checkpoint(self.checkpoint_repository.load(ckpt))
        records, data_vocabulary = self.dataset_repository.read(data)
        vocabulary = self.dataset_repository.read_vocabulary(vocab) if vocab else data_vocabulary

        detections, proposals = self.detect_all(model, records, vocabulary, max_detections)
        ground_truth = ground_truth_for(records, data_vocabulary, vocabulary)
        report = build_report(detections, ground_truth, vocabulary, split, proposals, interpolation)
        logger.info("Avaliação de '%s' em '%s': mAP %.4f, CorLoc %.4f.", ckpt, data, report.mean_ap, report.corloc)
        if out_prefix:
            self.report_writer.write_metrics(out_prefix, report)
        return report
