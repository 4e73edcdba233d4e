
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

# Esta camada contém as entidades de domínio, que são o coração da aplicação.
# Elas descrevem o mundo sintético (cenas, objetos, categorias), a geometria das caixas,
# os tensores aprendíveis e os resultados de detecção e avaliação.
# Nenhuma entidade conhece arquivos, linha de comando ou formato de serialização.

Color = Tuple[float, float, float]


@dataclass(frozen=True)
class Box:
    """Retângulo alinhado aos eixos (x0, y0, x1, y1) em pixels, origem no canto superior esquerdo.

    Caixas de área zero são válidas; apenas coordenadas invertidas são rejeitadas.
    """
    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ValueError(f"Caixa inválida: ({self.x0}, {self.y0}, {self.x1}, {self.y1}).")

    @property
    def width(self) -> float:
        return self.x1 - self.x0

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def clip(self, width: float, height: float) -> "Box":
        x0 = min(max(self.x0, 0.0), width)
        y0 = min(max(self.y0, 0.0), height)
        x1 = min(max(self.x1, x0), width)
        y1 = min(max(self.y1, y0), height)
        return Box(x0, y0, x1, y1)

    def to_list(self) -> List[float]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Box":
        if len(values) != 4:
            raise ValueError(f"Uma caixa precisa de 4 coordenadas, recebidas {len(values)}.")
        x0, y0, x1, y1 = (float(v) for v in values)
        return cls(x0, y0, x1, y1)


@dataclass(frozen=True)
class LtrbTargets:
    """Distâncias de uma localização aos quatro lados de uma caixa (l, t, r, b)."""
    l: float
    t: float
    r: float
    b: float

    def as_array(self) -> np.ndarray:
        return np.array([self.l, self.t, self.r, self.b], dtype=np.float64)


@dataclass(frozen=True)
class CategorySpec:
    """Representa uma categoria do vocabulário sintético.

    Categorias base têm cor e textura próprias. Categorias novas são definidas por pesos de
    mistura sobre categorias base: a aparência e o embedding textual são a mesma combinação
    convexa, o que cria a correlação aparência↔embedding que permite a transferência aberta.
    """
    name: str
    appearance: Color
    texture: int
    is_novel: bool = False
    mixture: Optional[Dict[str, float]] = None


@dataclass
class Vocabulary:
    """Lista ordenada de categorias; o índice na lista é o id da categoria."""
    categories: List[CategorySpec]

    def __post_init__(self):
        seen = set()
        for spec in self.categories:
            if spec.name in seen:
                raise ValueError(f"Nome de categoria duplicado no vocabulário: '{spec.name}'.")
            seen.add(spec.name)
            if spec.is_novel:
                if not spec.mixture:
                    raise ValueError(f"Categoria nova '{spec.name}' sem pesos de mistura.")
                if abs(sum(spec.mixture.values()) - 1.0) > 1e-6:
                    raise ValueError(f"Pesos de mistura de '{spec.name}' não somam 1.")
            elif spec.mixture:
                raise ValueError(f"Categoria base '{spec.name}' não pode ter mistura.")

    def __len__(self) -> int:
        return len(self.categories)

    def __iter__(self):
        return iter(self.categories)

    def __getitem__(self, index: int) -> CategorySpec:
        return self.categories[index]

    @property
    def names(self) -> List[str]:
        return [spec.name for spec in self.categories]

    def index_of(self, name: str) -> int:
        for index, spec in enumerate(self.categories):
            if spec.name == name:
                return index
        raise KeyError(name)

    @property
    def base_indices(self) -> List[int]:
        return [i for i, spec in enumerate(self.categories) if not spec.is_novel]

    @property
    def novel_indices(self) -> List[int]:
        return [i for i, spec in enumerate(self.categories) if spec.is_novel]

    def base_only(self) -> "Vocabulary":
        return Vocabulary([spec for spec in self.categories if not spec.is_novel])

    @classmethod
    def from_names(cls, names: Sequence[str]) -> "Vocabulary":
        """Vocabulário só de nomes (categorias base sem aparência), como guardado no checkpoint."""
        return cls([CategorySpec(name=name, appearance=(0.0, 0.0, 0.0), texture=0) for name in names])


@dataclass(frozen=True)
class BiasProfile:
    """Perfil de viés de um conjunto de dados sintético.

    Os dois perfis embutidos imitam dados centrados em objeto e dados de cenas complexas.
    """
    name: str
    count_range: Tuple[int, int]
    scale_range: Tuple[float, float]
    placement: str  # 'centered' ou 'uniform'
    brightness: float
    clutter_density: float


@dataclass(frozen=True)
class ObjectInstance:
    """Objeto de verdade-terreno: caixa, categoria e variação de aparência em [-0.1, 0.1]."""
    box: Box
    category: int
    jitter: Color = (0.0, 0.0, 0.0)


@dataclass
class Scene:
    """Mundo sintético de uma imagem. Usado pelo renderizador, pelo segmentador oráculo e
    pelos avaliadores; nunca pela perda do aprendiz."""
    height: int
    width: int
    objects: List[ObjectInstance]
    dataset_id: int
    brightness: float
    clutter_density: float
    seed: int

    @property
    def present_categories(self) -> List[int]:
        return sorted({obj.category for obj in self.objects})


@dataclass
class ImageRecord:
    """Imagem renderizada com rótulos de nível de imagem e verdade-terreno oculta."""
    image_id: int
    image: np.ndarray  # H x W x 3 em [0, 1]
    labels: np.ndarray  # y em {0,1}^C
    dataset_id: int
    ground_truth: List[ObjectInstance] = field(default_factory=list)

    @property
    def height(self) -> int:
        return int(self.image.shape[0])

    @property
    def width(self) -> int:
        return int(self.image.shape[1])

    def scene(self) -> Scene:
        """Reconstrói a cena (apenas caixas e categorias) para o segmentador oráculo."""
        return Scene(
            height=self.height,
            width=self.width,
            objects=list(self.ground_truth),
            dataset_id=self.dataset_id,
            brightness=0.0,
            clutter_density=0.0,
            seed=self.image_id,
        )


@dataclass
class ParamTensor:
    """Tensor aprendível nomeado com acumulador de gradiente do mesmo formato."""
    name: str
    values: np.ndarray
    grad: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.grad is None:
            self.grad = np.zeros_like(self.values)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.values.shape)

    def zero_grad(self):
        self.grad[...] = 0.0


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_decay: float = 0.1
    decay_step: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("A taxa de aprendizado deve ser não negativa.")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("O momento deve estar em [0, 1).")


@dataclass
class FeatureMap:
    """Mapa de características H' x W' x D_feat produzido pelo extrator de patches."""
    values: np.ndarray
    stride: int

    @property
    def grid(self) -> Tuple[int, int]:
        return int(self.values.shape[0]), int(self.values.shape[1])

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])


@dataclass
class LocationPredictions:
    """Predições por célula da LO-WSRPN: p e c via sigmoide, t = exp(logits) em pixels."""
    p: np.ndarray  # H' x W'
    c: np.ndarray  # H' x W'
    t: np.ndarray  # H' x W' x 4, ordem (l, t, r, b)
    stride: int
    image_size: Tuple[int, int]  # (H, W)

    @property
    def grid(self) -> Tuple[int, int]:
        return int(self.p.shape[0]), int(self.p.shape[1])


@dataclass(frozen=True)
class Proposal:
    box: Box
    score: float
    source: str  # 'lowsrpn', 'segmenter' ou 'image'


@dataclass(frozen=True)
class PgtBox:
    """Caixa de pseudo-verdade-terreno usada como supervisão do gerador de propostas."""
    box: Box
    category: int


@dataclass
class ScoreMatrices:
    s_c: np.ndarray
    s_d: np.ndarray
    s: np.ndarray
    phi: np.ndarray


@dataclass
class RefinementSupervision:
    """Supervisão de um ramo de refinamento.

    `labels` usa 0..C-1 para categorias e C para fundo; `targets` só é significativo onde o
    rótulo não é fundo.
    """
    labels: np.ndarray
    weights: np.ndarray
    targets: np.ndarray  # R x 4, caixas alvo (x0, y0, x1, y1)
    num_categories: int

    @property
    def foreground(self) -> np.ndarray:
        return self.labels < self.num_categories


@dataclass(frozen=True)
class Detection:
    image_id: int
    box: Box
    category: int
    confidence: float


@dataclass
class MetricReport:
    """Relatório de métricas de detecção; todos os valores em [0, 1]."""
    per_category_ap: Dict[str, float] = field(default_factory=dict)
    mean_ap: float = 0.0
    corloc: float = 0.0
    ap_range: float = 0.0
    average_recall: Dict[int, float] = field(default_factory=dict)
    recall_at_50: Dict[int, float] = field(default_factory=dict)
    split_ap: Dict[str, float] = field(default_factory=dict)


@dataclass
class OptimizerState:
    """Estado do laço de treino salvo junto ao checkpoint para permitir retomada."""
    epoch: int = 0
    step: int = 0
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Checkpoint:
    """Tensores nomeados do modelo, dimensões e vocabulário de treino, estado do otimizador."""
    tensors: Dict[str, np.ndarray]
    config: Dict[str, object] = field(default_factory=dict)
    vocabulary: List[str] = field(default_factory=list)
    optimizer: OptimizerState = field(default_factory=OptimizerState)
    version: int = 1


@dataclass
class LossLogRow:
    epoch: int
    step: int
    pg: float
    om: float
    ir: float
    total: float
    learning_rate: float
    grad_norms: Dict[str, float] = field(default_factory=dict)
