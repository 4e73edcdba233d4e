
from typing import List, Sequence, Tuple

import numpy as np

from src.domain.errors import SamplingError

# Amostradores de lote: aleatório (permutação por época) e consciente de classe (BCAS),
# que sorteia uma categoria e depois imagens rotuladas com ela.


class RandomSampler:
    """Uniforme sem reposição por época; o último lote pode ser menor."""

    def __init__(self, num_images: int, batch_size: int):
        if num_images < 1:
            raise SamplingError("Conjunto de dados vazio.")
        if batch_size < 1:
            raise ValueError("batch_size deve ser >= 1.")
        self.num_images = num_images
        self.batch_size = batch_size

    def __len__(self) -> int:
        return -(-self.num_images // self.batch_size)

    def epoch(self, rng: np.random.Generator) -> List[np.ndarray]:
        order = rng.permutation(self.num_images)
        return [order[i:i + self.batch_size] for i in range(0, self.num_images, self.batch_size)]


class BcasSampler:
    """Batch-class-aware sampling.

    Cada lote sorteia uniformemente uma categoria entre as que têm ao menos uma imagem
    rotulada e então `batch_size` imagens cujos rótulos a contêm (com reposição quando há
    menos imagens que o lote). Uma época tem o mesmo número de lotes do amostrador aleatório.
    """

    def __init__(self, labels: np.ndarray, batch_size: int):
        labels = np.asarray(labels)
        if labels.ndim != 2 or labels.shape[0] < 1:
            raise SamplingError("BCAS requer uma matriz de rótulos N x C não vazia.")
        if batch_size < 1:
            raise ValueError("batch_size deve ser >= 1.")
        self.batch_size = batch_size
        self.num_images = labels.shape[0]
        self.pools = {int(c): np.flatnonzero(labels[:, c] > 0) for c in range(labels.shape[1])}
        self.pools = {c: pool for c, pool in self.pools.items() if pool.size}
        if not self.pools:
            raise SamplingError("BCAS requer ao menos uma imagem rotulada.")
        self.categories = sorted(self.pools)

    def __len__(self) -> int:
        return -(-self.num_images // self.batch_size)

    def draw(self, rng: np.random.Generator) -> Tuple[int, np.ndarray]:
        category = self.categories[int(rng.integers(len(self.categories)))]
        pool = self.pools[category]
        indices = rng.choice(pool, size=self.batch_size, replace=pool.size < self.batch_size)
        return category, np.asarray(indices)

    def epoch(self, rng: np.random.Generator) -> List[np.ndarray]:
        return [self.draw(rng)[1] for _ in range(len(self))]


def build_sampler(kind: str, labels: np.ndarray, batch_size: int):
    if kind == "random":
        return RandomSampler(len(labels), batch_size)
    if kind == "bcas":
        return BcasSampler(labels, batch_size)
    raise ValueError(f"Amostrador desconhecido: '{kind}'.")


def sample_batch(records: Sequence, indices: Sequence[int]) -> list:
    return [records[int(i)] for i in indices]
