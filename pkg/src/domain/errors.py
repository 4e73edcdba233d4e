
from typing import Dict, Optional, Sequence

# Exceções de domínio. Todas derivam de ValueError para que os chamadores possam tratar
# erros de validação por um único caminho, como os controladores já faziam.


class ShapeMismatchError(ValueError):
    def __init__(self, left: Sequence[int], right: Sequence[int], context: str = ""):
        self.left = tuple(left)
        self.right = tuple(right)
        prefix = f"{context}: " if context else ""
        super().__init__(f"{prefix}formatos incompatíveis {self.left} e {self.right}.")


class DatasetFormatError(ValueError):
    def __init__(self, path: str, line_number: int, reason: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}, linha {line_number}: {reason}")


class DatasetVersionError(ValueError):
    pass


class CheckpointMismatchError(ValueError):
    def __init__(self, tensor_name: str, reason: str):
        self.tensor_name = tensor_name
        super().__init__(f"Checkpoint incompatível no tensor '{tensor_name}': {reason}")


class NonFiniteLossError(ValueError):
    def __init__(self, image_id: int, losses: Dict[str, float], step: Optional[int] = None):
        self.image_id = image_id
        self.losses = dict(losses)
        self.step = step
        terms = ", ".join(f"{k}={v!r}" for k, v in self.losses.items())
        where = f" no passo {step}" if step is not None else ""
        super().__init__(f"Perda não finita na imagem {image_id}{where}: {terms}")


class GradCheckError(ValueError):
    pass


class SamplingError(ValueError):
    pass
