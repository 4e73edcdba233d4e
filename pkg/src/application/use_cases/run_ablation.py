import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

from src.application.interfaces import IReportWriter
from src.application.use_cases.evaluate_model import EvaluateModelUseCase
from src.application.use_cases.generate_dataset import GenerateDatasetUseCase
from src.application.use_cases.train_model import TrainModelUseCase
from src.domain.config import TrainConfig

logger = logging.getLogger(__name__)

# Estudos de ablação com dados autogerados: DAFE ligado/desligado, fonte de propostas e
# amostrador BCAS contra aleatório. Cada configuração é treinada e avaliada com as mesmas
# sementes; o resultado é um CSV comparativo. A fonte de propostas varia só no treino: a
# avaliação usa sempre as propostas aprendidas.

ABLATION_HEADER = ("config", "mAP", "CorLoc", "AR@100")
STUDIES = ("dafe", "proposals", "bcas")


class RunAblationUseCase:
    """Caso de uso para os estudos de ablação.

    Orquestra os casos de uso de geração, treino e avaliação; não conhece formatos de arquivo.
    """

    def __init__(
        self,
        generate_dataset: GenerateDatasetUseCase,
        train_model: TrainModelUseCase,
        evaluate_model: EvaluateModelUseCase,
        report_writer: IReportWriter,
    ):
        self.generate_dataset = generate_dataset
        self.train_model = train_model
        self.evaluate_model = evaluate_model
        self.report_writer = report_writer

    def _datasets(self, study: str, work_dir: str, images: int, test_images: int, seed: int) -> Tuple[List[str], str]:
        test = os.path.join(work_dir, "test.jsonl")
        self.generate_dataset.execute(test, profile="scene_centric", images=test_images, seed=seed + 1000, dataset_id=0)
        if study == "dafe":
            paths = [os.path.join(work_dir, "train_object.jsonl"), os.path.join(work_dir, "train_scene.jsonl")]
            self.generate_dataset.execute(paths[0], profile="object_centric", images=images, seed=seed, dataset_id=0)
            self.generate_dataset.execute(paths[1], profile="scene_centric", images=images, seed=seed + 1, dataset_id=1)
            return paths, test
        path = os.path.join(work_dir, "train.jsonl")
        federated = 0.5 if study == "bcas" else None
        self.generate_dataset.execute(path, profile="scene_centric", images=images, seed=seed, federated=federated)
        return [path], test

    @staticmethod
    def variants(study: str, base: TrainConfig, data: Sequence[str]) -> List[Tuple[str, TrainConfig]]:
        if study == "dafe":
            settings = [("dafe_on", {"dafe_on": True}), ("dafe_off", {"dafe_on": False})]
        elif study == "proposals":
            settings = [(source, {"proposal_source": source}) for source in ("learned", "segmenter", "merged")]
        elif study == "bcas":
            settings = [("random", {"sampler": "random"}), ("bcas", {"sampler": "bcas"})]
        else:
            raise ValueError(f"Estudo desconhecido: '{study}'. Opções: {', '.join(STUDIES)}.")
        return [(name, base.model_copy(update={**update, "data": list(data)})) for name, update in settings]

    def execute(
        self,
        study: str,
        out: str,
        work_dir: str,
        base_config: Optional[TrainConfig] = None,
        images: int = 200,
        test_images: int = 50,
    ) -> List[Dict[str, object]]:
        """
        Gera os dados do estudo, treina e avalia cada configuração e grava o CSV comparativo.

        Args:
            study (str): dafe, proposals ou bcas.
            out (str): Caminho do CSV de saída.
            work_dir (str): Diretório para dados e checkpoints intermediários.
            base_config (Optional[TrainConfig]): Configuração comum às variantes.
            images (int): Imagens por conjunto de treino.
            test_images (int): Imagens do conjunto de teste.

        Returns:
            List[Dict[str, object]]: Uma linha por configuração.

        Raises:
            ValueError: Se o estudo for desconhecido.
        """
        if study not in STUDIES:
            raise ValueError(f"Estudo desconhecido: '{study}'. Opções: {', '.join(STUDIES)}.")
        base = base_config or TrainConfig()
        os.makedirs(work_dir, exist_ok=True)
        data, test = self._datasets(study, work_dir, images, test_images, base.seed)

        rows: List[Dict[str, object]] = []
        for name, config in self.variants(study, base, data):
            ckpt = os.path.join(work_dir, f"{study}_{name}.ckpt.json")
            self.train_model.execute(config, ckpt)
            report = self.evaluate_model.execute(
                ckpt,
                test,
                split="base",
                max_detections=config.max_detections,
            )
            rows.append({
                "config": name,
                "mAP": report.mean_ap,
                "CorLoc": report.corloc,
                "AR@100": report.average_recall.get(100, 0.0),
            })
            logger.info("Ablação %s/%s: mAP %.4f, CorLoc %.4f.", study, name, report.mean_ap, report.corloc)
        self.report_writer.write_table(out, ABLATION_HEADER, rows)
        return rows
