import os
from typing import Callable

import click

from src.application.use_cases.run_ablation import ABLATION_HEADER, STUDIES, RunAblationUseCase
from src.domain.config import TrainConfig
from src.infrastructure.config import Config
from src.interfaces.commands.common import echo_config, echo_table, handle_errors


def initialize_ablate_command(build_ablation: Callable[[TrainConfig], RunAblationUseCase]) -> click.Command:
    """Inicializa o comando `ablate`; o caso de uso é montado com a configuração base resolvida."""

    @click.command("ablate")
    @click.option("--study", required=True, type=click.Choice(STUDIES))
    @click.option("--out", required=True, type=click.Path(dir_okay=False), help="CSV comparativo.")
    @click.option("--work-dir", type=click.Path(file_okay=False), default=None, help="Padrão: <out>_work.")
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None)
    @click.option("--images", type=click.IntRange(min=1), default=200, show_default=True)
    @click.option("--test-images", type=click.IntRange(min=1), default=50, show_default=True)
    @click.option("--epochs", type=int, default=None)
    @click.option("--seed", type=int, default=None)
    def ablate(study, out, work_dir, config_path, images, test_images, epochs, seed):
        """Treina e avalia as configurações pareadas de um estudo de ablação."""
        work_dir = work_dir or f"{os.path.splitext(out)[0]}_work"
        with handle_errors():
            base = Config.load_train_config(config_path, {"epochs": epochs, "seed": seed})
        echo_config({"study": study, "out": out, "work_dir": work_dir, "images": images,
                     "test_images": test_images, **base.model_dump()})
        with handle_errors():
            rows = build_ablation(base).execute(
                study, out, work_dir, base_config=base, images=images, test_images=test_images
            )
        echo_table(ABLATION_HEADER, rows)

    return ablate
