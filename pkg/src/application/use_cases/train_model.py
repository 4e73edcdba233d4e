import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.application.interfaces import ICheckpointRepository, IDatasetRepository, IReportWriter, ISegmenterService
from src.domain.config import TrainConfig
from src.domain.diffcore import SgdOptimizer
from src.domain.entities import CategorySpec, ImageRecord, LossLogRow, ObjectInstance, OptimizerState, SgdConfig, Vocabulary
from src.domain.errors import NonFiniteLossError
from src.domain.model import TrainingSample, WsovodModel, module_grad_norms
from src.domain.sampling import build_sampler, sample_batch

logger = logging.getLogger(__name__)

# Caso de uso de treino: laço de épocas, perda total L_PG + L_OM + L_IR, decaimento da taxa
# de aprendizado, amostragem aleatória ou BCAS, treino conjunto em vários conjuntos de dados
# e checkpoint por época.

LOSS_TERMS = ("pg", "om", "ir")


@dataclass
class TrainingData:
    """Conjuntos de treino já remapeados para o vocabulário conjunto."""
    vocabulary: Vocabulary
    datasets: List[List[ImageRecord]]


@dataclass
class StepOutcome:
    losses: Dict[str, float]
    grads: Dict[str, np.ndarray]


@dataclass
class TrainingSummary:
    checkpoint_path: str
    epochs: int
    steps: int
    rows: List[LossLogRow] = field(default_factory=list)


def merge_vocabularies(vocabularies: Sequence[Vocabulary]) -> Vocabulary:
    """União por nome, na ordem de primeira aparição; categorias novas ficam de fora do treino."""
    merged: List[CategorySpec] = []
    seen = set()
    for vocabulary in vocabularies:
        for spec in vocabulary:
            if spec.is_novel or spec.name in seen:
                continue
            seen.add(spec.name)
            merged.append(spec)
    return Vocabulary(merged)


def remap_record(record: ImageRecord, source: Vocabulary, target: Vocabulary) -> ImageRecord:
    """Reindexa rótulos e verdade-terreno; categorias que o conjunto não conhece ficam com y=0."""
    mapping = {}
    for index, spec in enumerate(source):
        if spec.name in target.names:
            mapping[index] = target.index_of(spec.name)
    labels = np.zeros(len(target), dtype=np.int64)
    for index in np.flatnonzero(record.labels):
        if int(index) in mapping:
            labels[mapping[int(index)]] = 1
    ground_truth = [
        ObjectInstance(box=obj.box, category=mapping[obj.category], jitter=obj.jitter)
        for obj in record.ground_truth
        if obj.category in mapping
    ]
    return ImageRecord(
        image_id=record.image_id,
        image=record.image,
        labels=labels,
        dataset_id=record.dataset_id,
        ground_truth=ground_truth,
    )


def interleave(per_dataset: Sequence[Sequence[np.ndarray]]) -> List[Tuple[int, np.ndarray]]:
    """Round-robin entre conjuntos de dados: um lote de cada, até esgotar todos."""
    order: List[Tuple[int, np.ndarray]] = []
    for position in range(max((len(b) for b in per_dataset), default=0)):
        for dataset, batches in enumerate(per_dataset):
            if position < len(batches):
                order.append((dataset, batches[position]))
    return order


class TrainModelUseCase:
    """Caso de uso para treinar o detector a partir de rótulos de nível de imagem.

    Depende das abstrações de repositório de dados, de checkpoints, de relatórios e do
    segmentador; nenhuma delas é instanciada aqui.
    """

    def __init__(
        self,
        dataset_repository: IDatasetRepository,
        checkpoint_repository: ICheckpointRepository,
        report_writer: IReportWriter,
        segmenter_service: ISegmenterService,
    ):
        """
        Inicializa o caso de uso com as dependências necessárias.

        Args:
            dataset_repository (IDatasetRepository): Leitura dos conjuntos de treino.
            checkpoint_repository (ICheckpointRepository): Escrita e leitura de checkpoints.
            report_writer (IReportWriter): Escrita do log de perdas.
            segmenter_service (ISegmenterService): Propostas por grade e refinamento de caixas.
        """
        self.dataset_repository = dataset_repository
        self.checkpoint_repository = checkpoint_repository
        self.report_writer = report_writer
        self.segmenter_service = segmenter_service

    def load_data(self, paths: Sequence[str]) -> TrainingData:
        if not paths:
            raise ValueError("Pelo menos um conjunto de dados de treino é obrigatório.")
        loaded = [self.dataset_repository.read(path) for path in paths]
        vocabulary = merge_vocabularies([vocab for _, vocab in loaded])
        if len(vocabulary) == 0:
            raise ValueError("Os conjuntos de treino não têm categorias base.")
        datasets = []
        for (records, source), path in zip(loaded, paths):
            if not records:
                raise ValueError(f"Conjunto de dados vazio: {path}.")
            novel = set(source.novel_indices)
            for record in records:
                if any(obj.category in novel for obj in record.ground_truth):
                    raise ValueError(
                        f"{path}: a imagem {record.image_id} contém objetos de categorias novas; "
                        "divisões de avaliação não servem para treino."
                    )
            datasets.append([remap_record(record, source, vocabulary) for record in records])
        return TrainingData(vocabulary=vocabulary, datasets=datasets)

    def make_sample(self, record: ImageRecord, source: str) -> TrainingSample:
        segmenter = self.segmenter_service.grid_proposals(record) if source != "learned" else []
        return TrainingSample(
            image_id=record.image_id,
            image=record.image,
            labels=record.labels,
            segmenter_proposals=segmenter,
            refine_seed=partial(self.segmenter_service.refine_box, record),
        )

    def train_step(
        self,
        model: WsovodModel,
        batch: Sequence[ImageRecord],
        config: TrainConfig,
        warmup: bool,
        step: int,
    ) -> StepOutcome:
        """Perdas somadas no lote e gradientes reduzidos por soma, na ordem das imagens.

        Raises:
            NonFiniteLossError: Se alguma parcela da perda de uma imagem não for finita.
        """
        def run(record: ImageRecord) -> Tuple[Dict[str, float], Dict[str, np.ndarray]]:
            grads: Dict[str, np.ndarray] = {}
            rng = np.random.default_rng([config.seed, step, record.dataset_id, record.image_id])
            result = model.loss_and_grads(
                self.make_sample(record, config.proposal_source),
                source=config.proposal_source,
                warmup=warmup,
                grads=grads,
                rng=rng,
                iou_fg=config.iou_fg,
                pgt_score_floor=config.pgt_score_floor,
            )
            if not all(math.isfinite(value) for value in result.losses.values()):
                raise NonFiniteLossError(record.image_id, result.losses, step)
            return result.losses, grads

        if config.parallel_images and len(batch) > 1:
            with ThreadPoolExecutor(max_workers=len(batch)) as executor:
                outcomes = list(executor.map(run, batch))
        else:
            outcomes = [run(record) for record in batch]

        losses = {name: 0.0 for name in (*LOSS_TERMS, "total")}
        grads: Dict[str, np.ndarray] = {}
        for image_losses, image_grads in outcomes:
            for name in losses:
                losses[name] += image_losses[name]
            for name, value in image_grads.items():
                grads[name] = grads[name] + value if name in grads else value
        return StepOutcome(losses=losses, grads=grads)

    def execute(
        self,
        config: TrainConfig,
        out_ckpt: str,
        loss_log: Optional[str] = None,
        resume_from: Optional[str] = None,
    ) -> TrainingSummary:
        """
        Executa o treino completo e grava um checkpoint ao fim de cada época.

        Args:
            config (TrainConfig): Configuração validada do treino.
            out_ckpt (str): Caminho do checkpoint de saída.
            loss_log (Optional[str]): Caminho do CSV de perdas; None para não gravar.
            resume_from (Optional[str]): Checkpoint de onde retomar época, passo e momento.

        Returns:
            TrainingSummary: Passos executados e linhas do log de perdas.

        Raises:
            ValueError: Se não houver dados de treino.
            NonFiniteLossError: Se a perda deixar de ser finita.
            CheckpointMismatchError: Se o checkpoint de retomada não casar com a configuração.
        """
        data = self.load_data(config.data)
        start_epoch, step = 0, 0
        velocity: Dict[str, np.ndarray] = {}
        if resume_from:
            checkpoint = self.checkpoint_repository.load(resume_from)
            if checkpoint.vocabulary != data.vocabulary.names:
                raise ValueError("O vocabulário do checkpoint difere do vocabulário dos dados de treino.")
            model = WsovodModel.from_checkpoint(checkpoint, config.model_settings())
            start_epoch, step = checkpoint.optimizer.epoch, checkpoint.optimizer.step
            velocity = dict(checkpoint.optimizer.velocity)
            logger.info("Retomando do checkpoint '%s' (época %d, passo %d).", resume_from, start_epoch, step)
        else:
            model = WsovodModel(config.model_settings(), data.vocabulary, seed=config.seed)

        samplers = [
            build_sampler(config.sampler, np.stack([r.labels for r in records]), config.batch_size)
            for records in data.datasets
        ]
        steps_per_epoch = sum(len(sampler) for sampler in samplers)
        decay_step = int(math.floor(config.decay_at * config.epochs * steps_per_epoch))
        optimizer = SgdOptimizer(
            SgdConfig(
                learning_rate=config.learning_rate,
                momentum=config.momentum,
                weight_decay=config.weight_decay,
                lr_decay=config.lr_decay,
                decay_step=decay_step,
            ),
            velocity,
        )

        rows: List[LossLogRow] = []
        if start_epoch >= config.epochs:
            self.checkpoint_repository.save(out_ckpt, model.to_checkpoint(OptimizerState(start_epoch, step, optimizer.velocity)))
        for epoch in range(start_epoch, config.epochs):
            rng = np.random.default_rng([config.seed, epoch])
            batches = interleave([sampler.epoch(rng) for sampler in samplers])
            epoch_rows: List[LossLogRow] = []
            for dataset, indices in batches:
                step += 1
                lr = config.learning_rate * (config.lr_decay if step > decay_step else 1.0)
                batch = sample_batch(data.datasets[dataset], indices)
                outcome = self.train_step(model, batch, config, epoch < config.warmup_epochs, step)
                for name, param in model.params.items():
                    if name in outcome.grads:
                        param.grad += outcome.grads[name]
                optimizer.step(model.parameters(), learning_rate=lr)
                row = LossLogRow(
                    epoch=epoch,
                    step=step,
                    pg=outcome.losses["pg"],
                    om=outcome.losses["om"],
                    ir=outcome.losses["ir"],
                    total=outcome.losses["total"],
                    learning_rate=lr,
                    grad_norms=module_grad_norms(outcome.grads),
                )
                epoch_rows.append(row)
                logger.debug("Passo %d: total=%.6f pg=%.6f om=%.6f ir=%.6f", step, row.total, row.pg, row.om, row.ir)

            rows.extend(epoch_rows)
            if loss_log:
                self.report_writer.write_loss_log(loss_log, epoch_rows, append=bool(resume_from) or epoch > start_epoch)
            state = OptimizerState(epoch=epoch + 1, step=step, velocity=optimizer.velocity)
            self.checkpoint_repository.save(out_ckpt, model.to_checkpoint(state))
            mean_om = float(np.mean([r.om for r in epoch_rows])) if epoch_rows else 0.0
            logger.info("Época %d/%d concluída: %d passos, L_OM médio %.4f.", epoch + 1, config.epochs, len(epoch_rows), mean_om)

        if loss_log and not rows and not resume_from:
            self.report_writer.write_loss_log(loss_log, [])
        return TrainingSummary(checkpoint_path=out_ckpt, epochs=config.epochs, steps=step, rows=rows)
