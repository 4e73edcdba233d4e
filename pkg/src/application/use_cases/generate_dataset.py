import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.application.interfaces import IDatasetRepository
from src.domain.synthdata import BUILTIN_PROFILES, LabelPolicy, default_vocabulary, generate_records

logger = logging.getLogger(__name__)

# Esta camada contém os casos de uso (Use Cases), que orquestram as regras de domínio e as
# portas de persistência. Este caso de uso gera e grava um conjunto de dados sintético.


@dataclass
class GenerationSummary:
    path: str
    images: int
    objects: int
    label_density: float  # rótulos positivos por imagem
    num_categories: int


class GenerateDatasetUseCase:
    """Caso de uso para gerar um conjunto de dados sintético com um perfil de viés.

    Depende apenas da abstração `IDatasetRepository` para a escrita.
    """

    def __init__(self, dataset_repository: IDatasetRepository):
        """
        Inicializa o caso de uso com as dependências necessárias.

        Args:
            dataset_repository (IDatasetRepository): Repositório para gravar registros e vocabulário.
        """
        self.dataset_repository = dataset_repository

    def execute(
        self,
        out: str,
        profile: str = "object_centric",
        images: int = 100,
        categories: int = 8,
        novel: int = 0,
        federated: Optional[float] = None,
        seed: int = 42,
        dataset_id: int = 0,
        inline_images: bool = True,
        eval_split: bool = False,
    ) -> GenerationSummary:
        """
        Gera `images` registros e grava o conjunto de dados e seu vocabulário.

        Args:
            out (str): Caminho do arquivo JSONL de saída.
            profile (str): Nome do perfil de viés embutido.
            images (int): Número de imagens.
            categories (int): Número de categorias base.
            novel (int): Número de categorias novas definidas por mistura.
            federated (Optional[float]): p_keep da rotulagem federada; None para rótulos completos.
            seed (int): Semente global.
            dataset_id (int): Identificador do conjunto de dados gravado em cada registro.
            inline_images (bool): Imagens embutidas no JSON ou em arquivos binários irmãos.
            eval_split (bool): Divisão de avaliação: as categorias novas também aparecem nas cenas.

        Returns:
            GenerationSummary: Contagens do conjunto gerado.

        Raises:
            ValueError: Se o perfil for desconhecido ou os parâmetros estiverem fora do domínio.
        """
        if profile not in BUILTIN_PROFILES:
            raise ValueError(f"Perfil desconhecido: '{profile}'. Opções: {', '.join(sorted(BUILTIN_PROFILES))}.")
        if images < 0:
            raise ValueError("O número de imagens deve ser não negativo.")
        policy = LabelPolicy.full() if federated is None else LabelPolicy.federated(federated)
        vocabulary = default_vocabulary(categories, novel)

        records = list(generate_records(BUILTIN_PROFILES[profile], vocabulary, images, seed, dataset_id, policy, include_novel=eval_split))
        self.dataset_repository.write(out, records, vocabulary, inline_images=inline_images)

        objects = sum(len(record.ground_truth) for record in records)
        density = float(np.mean([record.labels.sum() for record in records])) if records else 0.0
        logger.info("Conjunto '%s' gravado: %d imagens, %d objetos.", out, len(records), objects)
        return GenerationSummary(path=out, images=len(records), objects=objects, label_density=density, num_categories=len(vocabulary))
