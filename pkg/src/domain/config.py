
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

# Modelos de configuração validados. Domínios de cada campo são verificados na construção;
# chaves desconhecidas são rejeitadas para que erros de digitação em arquivos de configuração
# não passem despercebidos.

ProposalSource = Literal["learned", "segmenter", "merged"]
SamplerKind = Literal["random", "bcas"]


class ModelConfig(BaseModel):
    """Dimensões e opções do modelo (valores padrão de escala de bancada)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    image_size: int = Field(64, ge=4)
    stride: int = Field(4, ge=1)
    d_feat: int = Field(32, ge=1)
    bins: int = Field(2, ge=1)
    embed_dim: int = Field(64, ge=1)
    num_prototypes: int = Field(8, ge=1)
    dafe_hidden: int = Field(32, ge=1)
    rpn_width: int = Field(32, ge=1)
    num_branches: int = Field(3, ge=1)
    num_proposals: int = Field(64, ge=1)
    temperature: float = Field(0.07, gt=0.0)
    dafe_on: bool = True
    dropout_on: bool = False
    dropout_rate: float = Field(0.5, ge=0.0, lt=1.0)
    embedding_seed: int = 0

    @field_validator("stride")
    @classmethod
    def _stride_divides_image(cls, value, info):
        size = info.data.get("image_size")
        if size is not None and size % value != 0:
            raise ValueError(f"image_size ({size}) deve ser múltiplo de stride ({value}).")
        return value


class TrainConfig(ModelConfig):
    """Configuração de treino: todos os campos do modelo mais o laço de otimização."""

    epochs: int = Field(20, ge=0)
    batch_size: int = Field(4, ge=1)
    learning_rate: float = Field(1e-2, ge=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    lr_decay: float = Field(0.1, gt=0.0, le=1.0)
    decay_at: float = Field(0.75, ge=0.0, le=1.0)
    warmup_epochs: int = Field(1, ge=0)
    sampler: SamplerKind = "random"
    data: List[str] = Field(default_factory=list)
    proposal_source: ProposalSource = "merged"
    seed: int = 42
    grid: int = Field(8, ge=1)
    jitter: float = Field(0.1, ge=0.0)
    refine_iou_floor: float = Field(0.3, ge=0.0, le=1.0)
    iou_fg: float = Field(0.5, ge=0.0, le=1.0)
    pgt_score_floor: float = Field(0.1, ge=0.0, le=1.0)
    parallel_images: bool = False
    max_detections: int = Field(100, ge=1)

    def model_settings(self) -> ModelConfig:
        return ModelConfig(**{name: getattr(self, name) for name in ModelConfig.model_fields})
