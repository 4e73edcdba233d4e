import json
import logging
import os
import tempfile
from typing import Dict

import numpy as np
from pydantic import ValidationError

from src.application.interfaces import ICheckpointRepository
from src.domain.entities import Checkpoint, OptimizerState
from src.domain.errors import CheckpointMismatchError
from src.infrastructure.schemas import FORMAT_VERSION, CheckpointModel, TensorModel

logger = logging.getLogger(__name__)

# Implementação concreta do repositório de checkpoints: um único documento JSON com os
# tensores nomeados (formato + valores achatados em ordem de linha), a configuração do
# modelo, o vocabulário de treino e o estado do otimizador.


def _tensor_payload(values: np.ndarray) -> Dict[str, list]:
    array = np.asarray(values, dtype=np.float64)
    return {"shape": [int(v) for v in array.shape], "values": array.ravel().tolist()}


def _tensor_value(name: str, model: TensorModel) -> np.ndarray:
    expected = int(np.prod(model.shape)) if model.shape else 1
    if len(model.values) != expected:
        raise CheckpointMismatchError(name, f"{len(model.values)} valores para o formato {tuple(model.shape)}")
    return np.asarray(model.values, dtype=np.float64).reshape(tuple(model.shape))


class JsonCheckpointRepository(ICheckpointRepository):
    """Implementação do repositório de checkpoints em JSON.

    A escrita é atômica: o documento vai para um arquivo temporário no mesmo diretório e
    substitui o destino com `os.replace`.
    """

    def save(self, path: str, checkpoint: Checkpoint) -> None:
        """
        Grava o checkpoint.

        Args:
            path (str): Caminho de destino.
            checkpoint (Checkpoint): Tensores, configuração, vocabulário e otimizador.

        Raises:
            OSError: Se o arquivo não puder ser gravado.
        """
        payload = {
            "version": FORMAT_VERSION,
            "tensors": {name: _tensor_payload(values) for name, values in checkpoint.tensors.items()},
            "config": checkpoint.config,
            "vocabulary": list(checkpoint.vocabulary),
            "optimizer": {
                "epoch": checkpoint.optimizer.epoch,
                "step": checkpoint.optimizer.step,
                "velocity": {name: _tensor_payload(v) for name, v in checkpoint.optimizer.velocity.items()},
            },
        }
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        handle = tempfile.NamedTemporaryFile("w", encoding="utf-8", dir=directory, suffix=".tmp", delete=False)
        try:
            with handle:
                json.dump(payload, handle, separators=(",", ":"))
            os.replace(handle.name, path)
        except BaseException:
            if os.path.exists(handle.name):
                os.remove(handle.name)
            raise
        logger.debug("Checkpoint gravado em '%s' (%d tensores).", path, len(checkpoint.tensors))

    def load(self, path: str) -> Checkpoint:
        """
        Lê um checkpoint.

        Args:
            path (str): Caminho do arquivo.

        Returns:
            Checkpoint: Checkpoint com os tensores já no formato declarado.

        Raises:
            OSError: Se o arquivo não puder ser lido.
            CheckpointMismatchError: Versão, estrutura ou tamanho de tensor inválidos.
        """
        with open(path, "r", encoding="utf-8") as handle:
            try:
                raw = json.load(handle)
            except json.JSONDecodeError as error:
                raise CheckpointMismatchError("<documento>", f"JSON inválido: {error.msg}") from error
        if not isinstance(raw, dict) or raw.get("version") != FORMAT_VERSION:
            version = raw.get("version") if isinstance(raw, dict) else None
            raise CheckpointMismatchError("<documento>", f"versão não suportada ({version})")
        try:
            model = CheckpointModel.model_validate(raw)
        except ValidationError as error:
            first = error.errors()[0]
            location = ".".join(str(part) for part in first.get("loc", ())) or "<documento>"
            raise CheckpointMismatchError(location, str(first.get("msg"))) from error

        return Checkpoint(
            tensors={name: _tensor_value(name, tensor) for name, tensor in model.tensors.items()},
            config=dict(model.config),
            vocabulary=list(model.vocabulary),
            optimizer=OptimizerState(
                epoch=model.optimizer.epoch,
                step=model.optimizer.step,
                velocity={name: _tensor_value(name, t) for name, t in model.optimizer.velocity.items()},
            ),
            version=model.version,
        )
