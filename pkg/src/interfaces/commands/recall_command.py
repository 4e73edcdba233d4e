import click

from src.application.use_cases.evaluate_recall import RECALL_HEADER, EvaluateRecallUseCase
from src.interfaces.commands.common import echo_config, echo_table, handle_errors


def initialize_recall_command(evaluate_recall_use_case: EvaluateRecallUseCase) -> click.Command:
    """Inicializa o comando `recall` com o caso de uso injetado."""

    @click.command("recall")
    @click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
    @click.option("--data", required=True, type=click.Path(dir_okay=False))
    @click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV da tabela de recall.")
    def recall(ckpt, data, out):
        """Recall de propostas AR@{10,100,1000} por fonte."""
        echo_config({"ckpt": ckpt, "data": data, "out": out})
        with handle_errors():
            rows = evaluate_recall_use_case.execute(ckpt, data, out=out)
        echo_table(RECALL_HEADER, rows)

    return recall
