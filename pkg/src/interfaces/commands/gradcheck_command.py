from typing import Optional

import click

from src.application.use_cases.check_gradients import LOSSES, CheckGradientsUseCase
from src.infrastructure.config import Config
from src.interfaces.commands.common import EXIT_GRADCHECK, echo_config, echo_table, fail, handle_errors

GRADCHECK_HEADER = ("loss", "max_rel_error", "worst_tensor", "coordinate", "status")


def initialize_gradcheck_command(check_gradients_use_case: CheckGradientsUseCase) -> click.Command:
    """Inicializa o comando `gradcheck` com o caso de uso injetado."""

    @click.command("gradcheck")
    @click.option("--seed", type=int, default=None)
    @click.option("--corrupt", type=str, default=None, help="Tensor cujo gradiente analítico é corrompido.")
    @click.option("--eps", type=float, default=1e-5, show_default=True)
    @click.option("--tolerance", type=float, default=1e-4, show_default=True)
    def gradcheck(seed: Optional[int], corrupt: Optional[str], eps: float, tolerance: float):
        """Verifica gradientes de L_OM, L_IR, L_PG e L_WSOVOD por diferenças finitas."""
        seed = Config.default_seed() if seed is None else seed
        echo_config({"seed": seed, "corrupt": corrupt, "eps": eps, "tolerance": tolerance, "losses": list(LOSSES)})
        with handle_errors():
            reports = check_gradients_use_case.execute(seed=seed, corrupt=corrupt, eps=eps, tolerance=tolerance)

        rows = []
        failures = []
        for name, report in reports.items():
            worst = max(report.tensors, key=lambda t: t.max_rel_error, default=None)
            rows.append({
                "loss": name,
                "max_rel_error": f"{report.max_rel_error:.3e}",
                "worst_tensor": worst.name if worst else "-",
                "coordinate": str(worst.worst_index) if worst else "-",
                "status": "ok" if report.passed else "FALHA",
            })
            failures.extend((name, tensor) for tensor in report.failures)
        echo_table(GRADCHECK_HEADER, rows)
        if failures:
            loss, tensor = failures[0]
            fail(
                f"{len(failures)} tensor(es) reprovado(s); primeiro: {loss} em '{tensor.name}' coordenada "
                f"{tensor.worst_index} (analítico {tensor.analytic:.6e}, numérico {tensor.numeric:.6e}).",
                EXIT_GRADCHECK,
            )

    return gradcheck
