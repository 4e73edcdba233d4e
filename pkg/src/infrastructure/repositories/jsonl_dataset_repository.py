import json
import logging
import os
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from src.application.interfaces import IDatasetRepository
from src.domain.entities import Box, CategorySpec, ImageRecord, ObjectInstance, Vocabulary
from src.domain.errors import DatasetFormatError, DatasetVersionError
from src.infrastructure.schemas import FORMAT_VERSION, ImageRecordModel, VocabularyModel

logger = logging.getLogger(__name__)

# Implementação concreta do repositório de conjuntos de dados: um objeto JSON por linha
# (UTF-8), imagens embutidas ou em arquivos binários irmãos de float32 little-endian, e o
# vocabulário em `<nome>.vocab.json` ao lado do arquivo.

IMAGE_DTYPE = np.dtype("<f4")


def vocabulary_path(dataset_path: str) -> str:
    stem, _ = os.path.splitext(dataset_path)
    return f"{stem}.vocab.json"


def images_dir(dataset_path: str) -> str:
    stem, _ = os.path.splitext(dataset_path)
    return f"{stem}_images"


def _dumps(payload: dict) -> str:
    return json.dumps(payload, ensure_ascii=False, separators=(",", ":"))


class JsonlDatasetRepository(IDatasetRepository):
    """Implementação do repositório de conjuntos de dados em JSONL.

    A conversão entre `ImageRecord` e `ImageRecordModel` fica toda aqui.
    """

    # --- Vocabulário ---

    def write_vocabulary(self, path: str, vocabulary: Vocabulary) -> None:
        payload = {
            "version": FORMAT_VERSION,
            "categories": [
                {
                    "name": spec.name,
                    "appearance": list(spec.appearance),
                    "texture": spec.texture,
                    "novel": spec.is_novel,
                    "mixture": dict(spec.mixture) if spec.mixture else None,
                }
                for spec in vocabulary
            ],
        }
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(json.dumps(payload, ensure_ascii=False, indent=2))
            handle.write("\n")

    def read_vocabulary(self, path: str) -> Vocabulary:
        """Lê um arquivo de vocabulário.

        Raises:
            OSError: Se o arquivo não puder ser lido.
            DatasetVersionError: Se a versão não for suportada.
            DatasetFormatError: Se o conteúdo for inválido.
        """
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as error:
            raise DatasetFormatError(path, error.lineno, f"JSON inválido: {error.msg}") from error
        if not isinstance(raw, dict) or raw.get("version") != FORMAT_VERSION:
            raise DatasetVersionError(f"{path}: versão de vocabulário não suportada ({raw.get('version') if isinstance(raw, dict) else None}).")
        try:
            model = VocabularyModel.model_validate(raw)
            return Vocabulary([
                CategorySpec(
                    name=item.name,
                    appearance=tuple(item.appearance),
                    texture=item.texture,
                    is_novel=item.novel,
                    mixture=dict(item.mixture) if item.mixture else None,
                )
                for item in model.categories
            ])
        except (ValidationError, ValueError) as error:
            raise DatasetFormatError(path, 1, str(error)) from error

    # --- Registros ---

    def _to_payload(self, record: ImageRecord, path: str, inline_images: bool) -> dict:
        payload = {
            "version": FORMAT_VERSION,
            "dataset_id": int(record.dataset_id),
            "image_id": int(record.image_id),
        }
        if inline_images:
            payload["image"] = np.asarray(record.image, dtype=np.float64).tolist()
        else:
            directory = images_dir(path)
            name = f"{record.image_id:06d}.bin"
            os.makedirs(directory, exist_ok=True)
            with open(os.path.join(directory, name), "wb") as handle:
                handle.write(np.ascontiguousarray(record.image, dtype=IMAGE_DTYPE).tobytes())
            payload["image_file"] = os.path.join(os.path.basename(directory), name)
            payload["shape"] = [int(v) for v in record.image.shape]
        payload["labels"] = [int(i) for i in np.flatnonzero(record.labels)]
        payload["num_categories"] = int(len(record.labels))
        payload["gt"] = [
            {"box": obj.box.to_list(), "cat": int(obj.category), "jitter": list(obj.jitter)}
            for obj in record.ground_truth
        ]
        return payload

    def write(self, path: str, records: Sequence[ImageRecord], vocabulary: Vocabulary, inline_images: bool = True) -> None:
        """Grava os registros (um por linha) e o vocabulário ao lado.

        Raises:
            OSError: Se algum arquivo não puder ser gravado.
        """
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for record in records:
                handle.write(_dumps(self._to_payload(record, path, inline_images)))
                handle.write("\n")
        self.write_vocabulary(vocabulary_path(path), vocabulary)
        logger.info("Gravados %d registros em '%s'.", len(records), path)

    def _load_image(self, model: ImageRecordModel, path: str, line_number: int) -> np.ndarray:
        if model.image is not None:
            image = np.asarray(model.image, dtype=np.float64)
            if image.ndim != 3 or image.shape[2] != 3:
                raise DatasetFormatError(path, line_number, f"imagem com formato {image.shape}, esperado H x W x 3")
            return image
        file_path = os.path.join(os.path.dirname(path), model.image_file)
        raw = np.fromfile(file_path, dtype=IMAGE_DTYPE)
        shape = tuple(model.shape)
        if raw.size != int(np.prod(shape)):
            raise DatasetFormatError(path, line_number, f"'{model.image_file}' tem {raw.size} valores, esperado {shape}")
        return raw.reshape(shape).astype(np.float64)

    def _to_entity(self, model: ImageRecordModel, path: str, line_number: int) -> ImageRecord:
        labels = np.zeros(model.num_categories, dtype=np.int64)
        labels[model.labels] = 1
        try:
            ground_truth = [
                ObjectInstance(box=Box.from_list(item.box), category=item.cat, jitter=tuple(item.jitter))
                for item in model.gt
            ]
        except ValueError as error:
            raise DatasetFormatError(path, line_number, str(error)) from error
        return ImageRecord(
            image_id=model.image_id,
            image=self._load_image(model, path, line_number),
            labels=labels,
            dataset_id=model.dataset_id,
            ground_truth=ground_truth,
        )

    def read_records(self, path: str) -> List[ImageRecord]:
        """Lê apenas os registros.

        Raises:
            OSError: Se o arquivo não puder ser lido.
            DatasetFormatError: Linha malformada, nomeando o número da linha.
            DatasetVersionError: Versão de registro não suportada.
        """
        return [record for _, record in self._read_numbered(path)]

    def _read_numbered(self, path: str) -> List[Tuple[int, ImageRecord]]:
        records: List[Tuple[int, ImageRecord]] = []
        with open(path, "r", encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as error:
                    raise DatasetFormatError(path, line_number, f"JSON inválido: {error.msg}") from error
                if not isinstance(raw, dict):
                    raise DatasetFormatError(path, line_number, "esperado um objeto JSON")
                if raw.get("version") != FORMAT_VERSION:
                    raise DatasetVersionError(f"{path}, linha {line_number}: versão não suportada ({raw.get('version')}).")
                try:
                    model = ImageRecordModel.model_validate(raw)
                except ValidationError as error:
                    raise DatasetFormatError(path, line_number, str(error.errors()[0].get("msg"))) from error
                records.append((line_number, self._to_entity(model, path, line_number)))
        return records

    def read(self, path: str) -> Tuple[List[ImageRecord], Vocabulary]:
        numbered = self._read_numbered(path)
        vocabulary = self.read_vocabulary(vocabulary_path(path))
        # primeira linha cujos rótulos ou objetos não cabem no vocabulário
        for line_number, record in numbered:
            if len(record.labels) != len(vocabulary):
                raise DatasetFormatError(path, line_number, f"registro {record.image_id} tem {len(record.labels)} categorias, vocabulário tem {len(vocabulary)}")
            outside = [obj.category for obj in record.ground_truth if obj.category >= len(vocabulary)]
            if outside:
                raise DatasetFormatError(path, line_number, f"registro {record.image_id} referencia a categoria {outside[0]}, vocabulário tem {len(vocabulary)}")
        return [record for _, record in numbered], vocabulary
