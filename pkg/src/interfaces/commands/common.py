import json
import logging
from contextlib import contextmanager
from typing import Dict, Iterator, Mapping, Sequence

import click

from src.domain.errors import CheckpointMismatchError, GradCheckError, NonFiniteLossError

logger = logging.getLogger(__name__)

# Utilidades compartilhadas pelos comandos: mapeamento de exceções para códigos de saída
# estáveis e saída legível (configuração resolvida e tabelas alinhadas).

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NON_FINITE = 4
EXIT_CHECKPOINT = 5
EXIT_GRADCHECK = 6


def fail(message: str, code: int):
    click.echo(f"Erro: {message}", err=True)
    raise click.exceptions.Exit(code)


@contextmanager
def handle_errors() -> Iterator[None]:
    """Converte as exceções dos casos de uso em códigos de saída.

    A ordem importa: as exceções de domínio derivam de ValueError.
    """
    try:
        yield
    except NonFiniteLossError as error:
        fail(str(error), EXIT_NON_FINITE)
    except CheckpointMismatchError as error:
        fail(str(error), EXIT_CHECKPOINT)
    except GradCheckError as error:
        fail(str(error), EXIT_GRADCHECK)
    except OSError as error:
        fail(str(error), EXIT_IO)
    except ValueError as error:
        fail(str(error), EXIT_USAGE)


def echo_config(values: Mapping[str, object]):
    """Imprime a configuração resolvida, uma chave por linha."""
    click.echo("# configuração resolvida")
    for key, value in values.items():
        click.echo(f"{key} = {json.dumps(value)}")


def _cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def echo_table(header: Sequence[str], rows: Sequence[Dict[str, object]]):
    cells = [[_cell(row.get(key, "")) for key in header] for row in rows]
    widths = [max([len(name)] + [len(line[i]) for line in cells]) for i, name in enumerate(header)]
    click.echo("  ".join(name.ljust(width) for name, width in zip(header, widths)))
    for line in cells:
        click.echo("  ".join(value.ljust(width) for value, width in zip(line, widths)))
