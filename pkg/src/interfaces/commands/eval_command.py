import click

from src.application.use_cases.evaluate_model import EvaluateModelUseCase
from src.domain.evalmetrics import INTERPOLATIONS
from src.interfaces.commands.common import echo_config, echo_table, handle_errors

SPLITS = ("base", "novel", "all")


def initialize_eval_command(evaluate_model_use_case: EvaluateModelUseCase) -> click.Command:
    """Inicializa o comando `eval` com o caso de uso injetado."""

    @click.command("eval")
    @click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
    @click.option("--data", required=True, type=click.Path(dir_okay=False))
    @click.option("--vocab", type=click.Path(dir_okay=False), default=None, help="Vocabulário de avaliação (pode conter categorias novas).")
    @click.option("--split", type=click.Choice(SPLITS), default="all", show_default=True)
    @click.option("--out", "out_prefix", type=click.Path(dir_okay=False), default=None, help="Prefixo dos relatórios CSV/JSON.")
    @click.option("--interpolation", type=click.Choice(INTERPOLATIONS), default="all_points", show_default=True)
    @click.option("--max-detections", type=click.IntRange(min=1), default=100, show_default=True)
    def evaluate(ckpt, data, vocab, split, out_prefix, interpolation, max_detections):
        """Avalia um checkpoint: mAP, CorLoc, AP@[.5:.95], AR@N e AP por divisão."""
        echo_config({
            "ckpt": ckpt, "data": data, "vocab": vocab, "split": split, "out": out_prefix,
            "interpolation": interpolation, "max_detections": max_detections,
        })
        with handle_errors():
            report = evaluate_model_use_case.execute(
                ckpt,
                data,
                vocab=vocab,
                split=split,
                out_prefix=out_prefix,
                interpolation=interpolation,
                max_detections=max_detections,
            )
        rows = [{"category": name, "AP50": value} for name, value in report.per_category_ap.items()]
        if rows:
            echo_table(("category", "AP50"), rows)
        click.echo(f"mAP          {report.mean_ap:.4f}")
        click.echo(f"CorLoc       {report.corloc:.4f}")
        click.echo(f"AP@[.5:.95]  {report.ap_range:.4f}")
        for name in ("base", "novel"):
            value = report.split_ap.get(name)
            click.echo(f"AP_{name:<9} {value:.4f}" if value is not None else f"AP_{name:<9} -")
        for limit, value in report.average_recall.items():
            click.echo(f"AR@{limit:<9} {value:.4f}")

    return evaluate
