import os
from typing import Any, Dict, Mapping, Optional

from pydantic import ValidationError

from src.domain.config import TrainConfig

# Esta camada contém as configurações da aplicação: valores padrão vindos do ambiente e a
# leitura de arquivos de configuração key=value. Ela faz parte da camada de Infraestrutura;
# as camadas internas recebem um TrainConfig já validado.


class Config:
    """Classe de configuração para a aplicação.

    Centraliza os valores padrão lidos do ambiente e a mesclagem da configuração de treino:
    flags da linha de comando sobrepõem o arquivo, que sobrepõe os padrões.
    """
    SEED = int(os.getenv("WSOVOD_SEED", "42"))
    LOG_LEVEL = os.getenv("WSOVOD_LOG_LEVEL", "INFO")
    DATA_DIR = os.getenv("WSOVOD_DATA_DIR", "data")

    @staticmethod
    def default_seed() -> int:
        """Semente global: WSOVOD_SEED no momento da chamada, ou 42."""
        return int(os.getenv("WSOVOD_SEED", str(Config.SEED)))

    @staticmethod
    def parse_config_file(path: str) -> Dict[str, str]:
        """Lê um arquivo key=value. Linhas vazias e comentários (#) são ignorados.

        Raises:
            OSError: Se o arquivo não puder ser lido.
            ValueError: Se uma linha não tiver o formato key=value ou repetir uma chave.
        """
        values: Dict[str, str] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for number, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}, linha {number}: esperado key=value.")
                key, value = (part.strip() for part in line.split("=", 1))
                if not key:
                    raise ValueError(f"{path}, linha {number}: chave vazia.")
                if key in values:
                    raise ValueError(f"{path}, linha {number}: chave repetida '{key}'.")
                values[key] = value
        return values

    @staticmethod
    def coerce_value(key: str, value: str) -> Any:
        if key == "data":
            return [item.strip() for item in value.split(",") if item.strip()]
        return value

    @staticmethod
    def load_train_config(path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
        """
        Monta o TrainConfig a partir de padrões, arquivo e flags.

        Args:
            path (Optional[str]): Arquivo key=value; None para usar só padrões e flags.
            overrides (Optional[Mapping[str, Any]]): Valores vindos das flags; None é ignorado.

        Returns:
            TrainConfig: Configuração validada.

        Raises:
            ValueError: Chave desconhecida ou valor fora do domínio, nomeando a chave.
        """
        merged: Dict[str, Any] = {"seed": Config.default_seed()}
        if path:
            for key, value in Config.parse_config_file(path).items():
                if key not in TrainConfig.model_fields:
                    raise ValueError(f"Chave de configuração desconhecida: '{key}'.")
                merged[key] = Config.coerce_value(key, value)
        for key, value in (overrides or {}).items():
            if value is None or (key == "data" and not value):
                continue
            if key not in TrainConfig.model_fields:
                raise ValueError(f"Chave de configuração desconhecida: '{key}'.")
            merged[key] = value
        try:
            return TrainConfig(**merged)
        except ValidationError as error:
            first = error.errors()[0]
            key = ".".join(str(part) for part in first.get("loc", ())) or "config"
            raise ValueError(f"Configuração inválida em '{key}': {first.get('msg')}") from error
