# Subcommands of the cfextract CLI
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from app.errors import ConfigurationError
from app.schemas import ScenarioConfig


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Read one scenario from a JSON document"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return ScenarioConfig.model_validate_json(text)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid config {path}: {exc.errors()[0]['msg']}") from exc
