from abc import ABC, abstractmethod
from typing import Dict, List, Sequence, Tuple

from src.domain.entities import Box, Checkpoint, ImageRecord, LossLogRow, MetricReport, Proposal, Vocabulary

# Esta camada define as interfaces (portas) que a camada de aplicação (Use Cases) utiliza.
# Os casos de uso dependem destas abstrações, nunca dos formatos de arquivo ou do
# segmentador concreto; as implementações ficam na camada de infraestrutura.

# --- Interfaces de Repositório ---

class IDatasetRepository(ABC):
    """Interface para o repositório de conjuntos de dados sintéticos.
    Um conjunto de dados é a lista de registros de imagem mais o vocabulário que os rotula.
    """
    @abstractmethod
    def write(self, path: str, records: Sequence[ImageRecord], vocabulary: Vocabulary, inline_images: bool = True) -> None:
        pass

    @abstractmethod
    def read(self, path: str) -> Tuple[List[ImageRecord], Vocabulary]:
        pass

    @abstractmethod
    def read_vocabulary(self, path: str) -> Vocabulary:
        pass

    @abstractmethod
    def write_vocabulary(self, path: str, vocabulary: Vocabulary) -> None:
        pass


class ICheckpointRepository(ABC):
    """Interface para o repositório de checkpoints do modelo."""
    @abstractmethod
    def save(self, path: str, checkpoint: Checkpoint) -> None:
        pass

    @abstractmethod
    def load(self, path: str) -> Checkpoint:
        pass


class IReportWriter(ABC):
    """Interface para a escrita de relatórios legíveis por máquina (CSV e JSON)."""
    @abstractmethod
    def write_metrics(self, path_prefix: str, report: MetricReport) -> List[str]:
        pass

    @abstractmethod
    def write_loss_log(self, path: str, rows: Sequence[LossLogRow], append: bool = False) -> None:
        pass

    @abstractmethod
    def write_table(self, path: str, header: Sequence[str], rows: Sequence[Dict[str, object]]) -> None:
        pass

# --- Interface do Segmentador ---
# Substituto determinístico de um segmentador de propósito geral, consultado por pontos de
# grade ou por caixa. Tem acesso à verdade-terreno da imagem e só é usado no treino e na
# avaliação de recall.

class ISegmenterService(ABC):
    """Interface para o segmentador que gera e refina propostas."""
    @abstractmethod
    def grid_proposals(self, record: ImageRecord) -> List[Proposal]:
        pass

    @abstractmethod
    def refine_box(self, record: ImageRecord, query: Box) -> Box:
        pass
