from typing import Callable, Dict, Optional, Sequence

import click

from src.application.use_cases.train_model import TrainModelUseCase
from src.domain.config import TrainConfig
from src.infrastructure.config import Config
from src.interfaces.commands.common import EXIT_USAGE, echo_config, fail, handle_errors

SOURCES = ("learned", "segmenter", "merged")


def parse_assignments(assignments: Sequence[str]) -> Dict[str, object]:
    """Converte `--set chave=valor` em sobreposições de configuração."""
    values: Dict[str, object] = {}
    for item in assignments:
        if "=" not in item:
            raise ValueError(f"Esperado chave=valor em --set, recebido '{item}'.")
        key, value = (part.strip() for part in item.split("=", 1))
        values[key] = Config.coerce_value(key, value)
    return values


def initialize_train_command(build_train_model: Callable[[TrainConfig], TrainModelUseCase]) -> click.Command:
    """Inicializa o comando `train`.

    O caso de uso é montado a partir da configuração resolvida, porque o segmentador depende
    da grade, do ruído e da semente configurados.
    """

    @click.command("train")
    @click.option("--data", "data", multiple=True, type=click.Path(dir_okay=False), help="Conjunto de treino (repetível).")
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="Arquivo key=value.")
    @click.option("--out-ckpt", required=True, type=click.Path(dir_okay=False))
    @click.option("--loss-log", type=click.Path(dir_okay=False), default=None)
    @click.option("--resume", type=click.Path(dir_okay=False), default=None, help="Checkpoint de onde retomar.")
    @click.option("--epochs", type=int, default=None)
    @click.option("--batch-size", type=int, default=None)
    @click.option("--learning-rate", type=float, default=None)
    @click.option("--warmup-epochs", type=int, default=None)
    @click.option("--sampler", type=click.Choice(["random", "bcas"]), default=None)
    @click.option("--proposal-source", type=click.Choice(SOURCES), default=None)
    @click.option("--num-branches", type=int, default=None, help="Número K de ramos de refinamento.")
    @click.option("--num-proposals", type=int, default=None, help="Propostas aprendidas R por imagem.")
    @click.option("--temperature", type=float, default=None)
    @click.option("--seed", type=int, default=None)
    @click.option("--dafe-off", is_flag=True, help="Desliga o DAFE.")
    @click.option("--parallel-images", is_flag=True, help="Forward/backward paralelo por imagem no lote.")
    @click.option("--set", "assignments", multiple=True, help="Sobrepõe qualquer campo: chave=valor.")
    def train(data, config_path, out_ckpt, loss_log, resume, epochs, batch_size, learning_rate, warmup_epochs,
              sampler, proposal_source, num_branches, num_proposals, temperature, seed,
              dafe_off, parallel_images, assignments):
        """Treina o detector a partir de rótulos de nível de imagem."""
        try:
            overrides = parse_assignments(assignments)
        except ValueError as error:
            fail(str(error), EXIT_USAGE)
        flags = {
            "data": list(data) or None,
            "epochs": epochs,
            "batch_size": batch_size,
            "learning_rate": learning_rate,
            "warmup_epochs": warmup_epochs,
            "sampler": sampler,
            "proposal_source": proposal_source,
            "num_branches": num_branches,
            "num_proposals": num_proposals,
            "temperature": temperature,
            "seed": seed,
            "dafe_on": False if dafe_off else None,
            "parallel_images": True if parallel_images else None,
        }
        overrides.update({key: value for key, value in flags.items() if value is not None})
        with handle_errors():
            config = Config.load_train_config(config_path, overrides)
        echo_config(config.model_dump())
        if not config.data:
            fail("Pelo menos um --data (ou 'data' no arquivo de configuração) é obrigatório.", EXIT_USAGE)

        with handle_errors():
            summary = build_train_model(config).execute(config, out_ckpt, loss_log=loss_log, resume_from=resume)
        last: Optional[object] = summary.rows[-1] if summary.rows else None
        if last is not None:
            click.echo(
                f"passo {last.step}: L_PG {last.pg:.4f}  L_OM {last.om:.4f}  L_IR {last.ir:.4f}  total {last.total:.4f}"
            )
        click.echo(f"{summary.steps} passos em {summary.epochs} épocas -> {summary.checkpoint_path}")

    return train
