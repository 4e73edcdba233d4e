import logging

import click

from src.infrastructure.config import Config
from src.infrastructure.repositories.csv_report_repository import CsvReportRepository
from src.infrastructure.repositories.json_checkpoint_repository import JsonCheckpointRepository
from src.infrastructure.repositories.jsonl_dataset_repository import JsonlDatasetRepository
from src.infrastructure.services.oracle_segmenter_service import OracleSegmenterService

from src.application.use_cases.check_gradients import CheckGradientsUseCase
from src.application.use_cases.evaluate_model import EvaluateModelUseCase
from src.application.use_cases.evaluate_recall import EvaluateRecallUseCase
from src.application.use_cases.generate_dataset import GenerateDatasetUseCase
from src.application.use_cases.run_ablation import RunAblationUseCase
from src.application.use_cases.train_model import TrainModelUseCase
from src.domain.config import TrainConfig

from src.interfaces.commands.ablate_command import initialize_ablate_command
from src.interfaces.commands.eval_command import initialize_eval_command
from src.interfaces.commands.gen_command import initialize_gen_command
from src.interfaces.commands.gradcheck_command import initialize_gradcheck_command
from src.interfaces.commands.recall_command import initialize_recall_command
from src.interfaces.commands.train_command import initialize_train_command

# Esta é a camada de Interfaces (a mais externa na Clean Architecture).
# O arquivo `app.py` é o ponto de entrada da linha de comando e faz a composição de todas as
# dependências: repositórios e segmentador concretos são criados aqui e injetados nos casos
# de uso, que por sua vez são injetados nos comandos.


def segmenter_for(config: TrainConfig) -> OracleSegmenterService:
    return OracleSegmenterService(
        grid=config.grid,
        jitter=config.jitter,
        refine_iou_floor=config.refine_iou_floor,
        seed=config.seed,
    )


def create_app() -> click.Group:
    """Cria o grupo de comandos, injetando as dependências."""
    logging.basicConfig(
        level=getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    # Repositórios e serviços concretos
    dataset_repository = JsonlDatasetRepository()
    checkpoint_repository = JsonCheckpointRepository()
    report_writer = CsvReportRepository()
    default_segmenter = segmenter_for(TrainConfig(seed=Config.default_seed()))

    # Casos de uso
    generate_dataset_use_case = GenerateDatasetUseCase(dataset_repository)
    evaluate_model_use_case = EvaluateModelUseCase(dataset_repository, checkpoint_repository, report_writer)
    evaluate_recall_use_case = EvaluateRecallUseCase(dataset_repository, checkpoint_repository, report_writer, default_segmenter)
    check_gradients_use_case = CheckGradientsUseCase()

    def build_train_model(config: TrainConfig) -> TrainModelUseCase:
        return TrainModelUseCase(dataset_repository, checkpoint_repository, report_writer, segmenter_for(config))

    def build_ablation(config: TrainConfig) -> RunAblationUseCase:
        return RunAblationUseCase(
            generate_dataset_use_case,
            build_train_model(config),
            evaluate_model_use_case,
            report_writer,
        )

    @click.group()
    def cli():
        """Detecção de objetos de vocabulário aberto fracamente supervisionada, em escala de bancada."""

    # Comandos
    cli.add_command(initialize_gen_command(generate_dataset_use_case))
    cli.add_command(initialize_train_command(build_train_model))
    cli.add_command(initialize_eval_command(evaluate_model_use_case))
    cli.add_command(initialize_ablate_command(build_ablation))
    cli.add_command(initialize_gradcheck_command(check_gradients_use_case))
    cli.add_command(initialize_recall_command(evaluate_recall_use_case))
    return cli


if __name__ == '__main__':
    # Ponto de entrada: python -m src.interfaces.app <comando> [flags]
    create_app()()
