
import logging
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.domain.entities import (
    BiasProfile,
    Box,
    CategorySpec,
    ImageRecord,
    ObjectInstance,
    Scene,
    Vocabulary,
)
from src.domain.geometry import iou

# Benchmark sintético que substitui VOC/COCO/LVIS em escala de bancada: geração de cenas,
# renderização, rotulagem de nível de imagem (completa ou federada) e perfis de viés.
# Toda saída é função pura de (entradas, semente).

logger = logging.getLogger(__name__)

IMAGE_SIZE = 64
MAX_PAIRWISE_IOU = 0.3
PLACEMENT_ATTEMPTS = 100
TEXTURE_CONTRAST = 0.15
BACKGROUND_NOISE = 0.03

# Cores saturadas; o fundo e a desordem são acromáticos.
BASE_CATEGORIES: List[CategorySpec] = [
    CategorySpec("red", (0.85, 0.15, 0.15), 0),
    CategorySpec("orange", (0.85, 0.50, 0.10), 1),
    CategorySpec("yellow", (0.85, 0.85, 0.15), 2),
    CategorySpec("green", (0.15, 0.75, 0.20), 3),
    CategorySpec("cyan", (0.15, 0.80, 0.85), 0),
    CategorySpec("blue", (0.15, 0.25, 0.85), 1),
    CategorySpec("purple", (0.50, 0.15, 0.80), 2),
    CategorySpec("magenta", (0.85, 0.15, 0.70), 3),
]

NOVEL_MIXTURES: List[Tuple[str, Dict[str, float]]] = [
    ("lime", {"yellow": 0.5, "green": 0.5}),
    ("azure", {"cyan": 0.6, "blue": 0.4}),
    ("crimson", {"red": 0.7, "magenta": 0.3}),
]

OBJECT_CENTRIC = BiasProfile(
    name="object_centric",
    count_range=(1, 1),
    scale_range=(0.4, 0.7),
    placement="centered",
    brightness=0.55,
    clutter_density=0.0,
)

SCENE_CENTRIC = BiasProfile(
    name="scene_centric",
    count_range=(2, 6),
    scale_range=(0.15, 0.35),
    placement="uniform",
    brightness=0.30,
    clutter_density=0.3,
)

BUILTIN_PROFILES: Dict[str, BiasProfile] = {
    OBJECT_CENTRIC.name: OBJECT_CENTRIC,
    SCENE_CENTRIC.name: SCENE_CENTRIC,
}


@dataclass(frozen=True)
class LabelPolicy:
    """Política de rotulagem: completa, ou federada mantendo cada categoria com p_keep."""
    p_keep: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p_keep <= 1.0:
            raise ValueError(f"p_keep deve estar em (0, 1], recebido {self.p_keep}.")

    @classmethod
    def full(cls) -> "LabelPolicy":
        return cls(1.0)

    @classmethod
    def federated(cls, p_keep: float) -> "LabelPolicy":
        return cls(p_keep)

    @property
    def is_full(self) -> bool:
        return self.p_keep >= 1.0


def mix_appearance(mixture: Dict[str, float], vocabulary: Sequence[CategorySpec]) -> Tuple[float, float, float]:
    by_name = {spec.name: spec for spec in vocabulary}
    color = np.zeros(3)
    for name, weight in mixture.items():
        color += weight * np.asarray(by_name[name].appearance)
    return tuple(float(v) for v in color)


def default_vocabulary(num_base: int = 8, num_novel: int = 0) -> Vocabulary:
    """Vocabulário embutido: `num_base` categorias base seguidas de `num_novel` novas."""
    if not 1 <= num_base <= len(BASE_CATEGORIES):
        raise ValueError(f"Número de categorias base deve estar em [1, {len(BASE_CATEGORIES)}].")
    if not 0 <= num_novel <= len(NOVEL_MIXTURES):
        raise ValueError(f"Número de categorias novas deve estar em [0, {len(NOVEL_MIXTURES)}].")
    base = BASE_CATEGORIES[:num_base]
    base_names = [spec.name for spec in base]
    categories = list(base)
    for name, mixture in NOVEL_MIXTURES:
        if len(categories) - num_base == num_novel:
            break
        if not set(mixture) <= set(base_names):
            continue
        # textura da componente de maior peso; empate pela categoria base de menor índice
        dominant = max(mixture.items(), key=lambda item: (item[1], -base_names.index(item[0])))[0]
        texture = base[base_names.index(dominant)].texture
        categories.append(
            CategorySpec(
                name=name,
                appearance=mix_appearance(mixture, base),
                texture=texture,
                is_novel=True,
                mixture=dict(mixture),
            )
        )
    if len(categories) - num_base < num_novel:
        raise ValueError("As categorias base escolhidas não cobrem as misturas das categorias novas.")
    return Vocabulary(categories)


def image_seed(global_seed: int, image_index: int) -> int:
    """Semente por imagem derivada de (semente global, índice)."""
    return int(np.random.SeedSequence([int(global_seed), int(image_index)]).generate_state(1)[0])


def _sample_box(profile: BiasProfile, rng: np.random.Generator, height: int, width: int) -> Box:
    low, high = profile.scale_range
    w = int(round(max(4.0, rng.uniform(low, high) * width)))
    h = int(round(max(4.0, rng.uniform(low, high) * height)))
    w, h = min(w, width), min(h, height)
    if profile.placement == "centered":
        cx = width / 2.0 + rng.uniform(-0.1, 0.1) * width
        cy = height / 2.0 + rng.uniform(-0.1, 0.1) * height
        x0 = int(np.clip(round(cx - w / 2.0), 0, width - w))
        y0 = int(np.clip(round(cy - h / 2.0), 0, height - h))
    elif profile.placement == "uniform":
        x0 = int(rng.integers(0, width - w + 1))
        y0 = int(rng.integers(0, height - h + 1))
    else:
        raise ValueError(f"Posicionamento desconhecido: '{profile.placement}'.")
    return Box(float(x0), float(y0), float(x0 + w), float(y0 + h))


def gen_scene(
    profile: BiasProfile,
    categories: Vocabulary,
    rng_seed: int,
    dataset_id: int = 0,
    size: Tuple[int, int] = (IMAGE_SIZE, IMAGE_SIZE),
    include_novel: bool = False,
) -> Scene:
    """Gera uma cena de forma determinística a partir de (perfil, vocabulário, semente).

    Categorias novas só aparecem com `include_novel` (divisões de avaliação); por padrão os
    objetos são sorteados entre as categorias base.

    Objetos são posicionados por amostragem por rejeição com IoU par a par <= 0.3; um objeto
    que não encontra lugar em 100 tentativas é descartado (a cena fica com menos objetos).
    """
    if len(categories) == 0:
        raise ValueError("O vocabulário não pode ser vazio.")
    pool = list(range(len(categories))) if include_novel else categories.base_indices
    if not pool:
        raise ValueError("O vocabulário não tem categorias base.")
    height, width = size
    rng = np.random.default_rng(rng_seed)
    low, high = profile.count_range
    count = int(rng.integers(low, high + 1))
    objects: List[ObjectInstance] = []
    for _ in range(count):
        category = int(pool[int(rng.integers(0, len(pool)))])
        jitter = tuple(float(v) for v in rng.uniform(-0.1, 0.1, size=3))
        for _attempt in range(PLACEMENT_ATTEMPTS):
            box = _sample_box(profile, rng, height, width)
            if all(iou(box, other.box) <= MAX_PAIRWISE_IOU for other in objects):
                objects.append(ObjectInstance(box=box, category=category, jitter=jitter))
                break
        else:
            logger.warning("Falha de posicionamento após %d tentativas (semente %d).", PLACEMENT_ATTEMPTS, rng_seed)
    return Scene(
        height=height,
        width=width,
        objects=objects,
        dataset_id=dataset_id,
        brightness=profile.brightness,
        clutter_density=profile.clutter_density,
        seed=int(rng_seed),
    )


def texture_pattern(texture: int, height: int, width: int) -> np.ndarray:
    """Modulação multiplicativa com média 1 (para lados pares) que codifica a textura."""
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    if texture == 0:
        sign = np.zeros((height, width))
    elif texture == 1:
        sign = np.where(rows % 2 == 0, 1.0, -1.0) * np.ones((1, width))
    elif texture == 2:
        sign = np.where(cols % 2 == 0, 1.0, -1.0) * np.ones((height, 1))
    elif texture == 3:
        sign = np.where((rows + cols) % 2 == 0, 1.0, -1.0)
    else:
        raise ValueError(f"Textura desconhecida: {texture}.")
    return 1.0 + TEXTURE_CONTRAST * sign


def render(scene: Scene, vocabulary: Vocabulary) -> np.ndarray:
    """Renderiza a cena em uma imagem H x W x 3 em [0, 1]; objetos posteriores cobrem os anteriores."""
    rng = np.random.default_rng(scene.seed)
    height, width = scene.height, scene.width
    image = scene.brightness + rng.uniform(-BACKGROUND_NOISE, BACKGROUND_NOISE, size=(height, width, 3))

    # Desordem: retângulos de ruído acromático, sem cor de categoria.
    for _ in range(int(round(scene.clutter_density * 20))):
        w = int(rng.integers(3, 13))
        h = int(rng.integers(3, 13))
        x0 = int(rng.integers(0, width - w + 1))
        y0 = int(rng.integers(0, height - h + 1))
        level = rng.uniform(0.25, 0.65)
        noise = rng.uniform(-0.05, 0.05, size=(h, w, 1))
        image[y0:y0 + h, x0:x0 + w, :] = level + noise

    for obj in scene.objects:
        spec = vocabulary[obj.category]
        color = np.clip(np.asarray(spec.appearance) + np.asarray(obj.jitter), 0.0, 1.0)
        x0, y0, x1, y1 = (int(round(v)) for v in obj.box.to_list())
        pattern = texture_pattern(spec.texture, y1 - y0, x1 - x0)
        image[y0:y1, x0:x1, :] = color[None, None, :] * pattern[:, :, None]

    return np.clip(image, 0.0, 1.0)


def label_image(scene: Scene, num_categories: int, policy: LabelPolicy, rng_seed: int = 0) -> np.ndarray:
    """Vetor y de rótulos de imagem.

    Completa: presença exata. Federada: cada categoria presente é mantida com probabilidade
    p_keep; pelo menos um rótulo é sempre mantido. Nunca afirma uma categoria ausente.
    """
    labels = np.zeros(num_categories, dtype=np.int64)
    present = scene.present_categories
    if not present:
        return labels
    if policy.is_full:
        labels[present] = 1
        return labels
    rng = np.random.default_rng([int(rng_seed), 7919])
    keep = rng.random(len(present)) < policy.p_keep
    if not keep.any():
        keep[int(rng.integers(0, len(present)))] = True
    for category, kept in zip(present, keep):
        if kept:
            labels[category] = 1
    return labels


def make_record(
    image_id: int,
    profile: BiasProfile,
    vocabulary: Vocabulary,
    global_seed: int,
    dataset_id: int = 0,
    policy: Optional[LabelPolicy] = None,
    include_novel: bool = False,
) -> ImageRecord:
    seed = image_seed(global_seed, image_id)
    scene = gen_scene(profile, vocabulary, seed, dataset_id=dataset_id, include_novel=include_novel)
    return ImageRecord(
        image_id=image_id,
        image=render(scene, vocabulary),
        labels=label_image(scene, len(vocabulary), policy or LabelPolicy.full(), rng_seed=seed),
        dataset_id=dataset_id,
        ground_truth=list(scene.objects),
    )


def generate_records(
    profile: BiasProfile,
    vocabulary: Vocabulary,
    num_images: int,
    global_seed: int,
    dataset_id: int = 0,
    policy: Optional[LabelPolicy] = None,
    include_novel: bool = False,
) -> Iterator[ImageRecord]:
    """Gera registros um a um; cada imagem depende apenas de hash(semente global, índice)."""
    for image_id in range(num_images):
        yield make_record(image_id, profile, vocabulary, global_seed, dataset_id, policy, include_novel)
