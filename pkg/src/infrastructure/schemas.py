from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

# Modelos de persistência: o formato exato de cada registro em disco. Os repositórios
# convertem entre estes modelos e as entidades de domínio, de modo que o domínio não conheça
# JSON. A validação acontece na leitura.

FORMAT_VERSION = 1


class GroundTruthModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    box: List[float] = Field(min_length=4, max_length=4)
    cat: int = Field(ge=0)
    jitter: List[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0], min_length=3, max_length=3)


class ImageRecordModel(BaseModel):
    """Uma linha do arquivo de conjunto de dados."""
    model_config = ConfigDict(extra="forbid")

    version: int
    dataset_id: int = Field(ge=0)
    image_id: int = Field(ge=0)
    image: Optional[List[List[List[float]]]] = None
    image_file: Optional[str] = None
    shape: Optional[List[int]] = None
    labels: List[int]
    num_categories: int = Field(ge=0)
    gt: List[GroundTruthModel] = Field(default_factory=list)

    @model_validator(mode="after")
    def _image_source(self):
        if (self.image is None) == (self.image_file is None):
            raise ValueError("o registro precisa de exatamente um entre 'image' e 'image_file'")
        if self.image_file is not None and (self.shape is None or len(self.shape) != 3):
            raise ValueError("'image_file' exige 'shape' com 3 dimensões")
        if any(not 0 <= label < self.num_categories for label in self.labels):
            raise ValueError("rótulo fora de [0, num_categories)")
        return self


class CategoryModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str = Field(min_length=1)
    appearance: List[float] = Field(min_length=3, max_length=3)
    texture: int = Field(ge=0)
    novel: bool = False
    mixture: Optional[Dict[str, float]] = None


class VocabularyModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    categories: List[CategoryModel]


class TensorModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    shape: List[int]
    values: List[float]


class OptimizerModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    epoch: int = Field(0, ge=0)
    step: int = Field(0, ge=0)
    velocity: Dict[str, TensorModel] = Field(default_factory=dict)


class CheckpointModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    version: int
    tensors: Dict[str, TensorModel]
    config: Dict[str, object] = Field(default_factory=dict)
    vocabulary: List[str] = Field(default_factory=list)
    optimizer: OptimizerModel = Field(default_factory=OptimizerModel)
