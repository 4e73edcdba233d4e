from typing import Optional

import click

from src.application.use_cases.generate_dataset import GenerateDatasetUseCase
from src.domain.synthdata import BUILTIN_PROFILES
from src.infrastructure.config import Config
from src.interfaces.commands.common import echo_config, handle_errors

# Esta é a camada de Interfaces. Cada comando converte as flags da linha de comando para os
# argumentos do caso de uso, chama o caso de uso e formata a saída. Nenhuma regra de domínio
# mora aqui.


def initialize_gen_command(generate_dataset_use_case: GenerateDatasetUseCase) -> click.Command:
    """Inicializa o comando `gen` com o caso de uso injetado."""

    @click.command("gen")
    @click.option("--out", required=True, type=click.Path(dir_okay=False), help="Arquivo JSONL de saída.")
    @click.option("--profile", type=click.Choice(sorted(BUILTIN_PROFILES)), default="object_centric", show_default=True)
    @click.option("--images", type=click.IntRange(min=0), default=100, show_default=True)
    @click.option("--categories", type=click.IntRange(min=1), default=8, show_default=True)
    @click.option("--novel", type=click.IntRange(min=0), default=0, show_default=True, help="Categorias novas por mistura.")
    @click.option("--federated", type=click.FloatRange(min=0.0, max=1.0, min_open=True), default=None, help="p_keep da rotulagem federada.")
    @click.option("--seed", type=int, default=None, help="Semente; padrão WSOVOD_SEED ou 42.")
    @click.option("--dataset-id", type=click.IntRange(min=0), default=0, show_default=True)
    @click.option("--binary-images", is_flag=True, help="Grava imagens em arquivos float32 ao lado do JSONL.")
    @click.option("--eval-split", is_flag=True, help="Divisão de avaliação: objetos de categorias novas aparecem nas cenas.")
    def gen(out: str, profile: str, images: int, categories: int, novel: int, federated: Optional[float],
            seed: Optional[int], dataset_id: int, binary_images: bool, eval_split: bool):
        """Gera um conjunto de dados sintético com rótulos de imagem."""
        seed = Config.default_seed() if seed is None else seed
        echo_config({
            "out": out, "profile": profile, "images": images, "categories": categories, "novel": novel,
            "federated": federated, "seed": seed, "dataset_id": dataset_id, "binary_images": binary_images,
            "eval_split": eval_split,
        })
        with handle_errors():
            summary = generate_dataset_use_case.execute(
                out,
                profile=profile,
                images=images,
                categories=categories,
                novel=novel,
                federated=federated,
                seed=seed,
                dataset_id=dataset_id,
                inline_images=not binary_images,
                eval_split=eval_split,
            )
        click.echo(
            f"{summary.images} imagens, {summary.objects} objetos, "
            f"densidade de rótulos {summary.label_density:.3f} ({summary.num_categories} categorias) -> {summary.path}"
        )

    return gen
