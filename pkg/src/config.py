import os
from dataclasses import dataclass, field
from typing import Any

import yaml
from dotenv import load_dotenv

from src.errors import UnknownDataset

load_dotenv()

_ROOT = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))


@dataclass
class SystemConfig:
    # Execution
    threads: int = field(default_factory=lambda: max(1, int(os.getenv("CONSPARSE_THREADS", "1"))))
    epochs: int = field(default_factory=lambda: int(os.getenv("CONSPARSE_EPOCHS", "20000")))
    log_level: str = field(default_factory=lambda: os.getenv("CONSPARSE_LOG_LEVEL", "INFO").upper())
    # Paths
    output_dir: str = field(default_factory=lambda: os.getenv("CONSPARSE_OUTPUT_DIR", "runs"))
    presets_dir: str = field(default_factory=lambda: os.getenv(
        "CONSPARSE_PRESETS_DIR", os.path.join(_ROOT, "config", "presets")))


_config_instance = None


def get_config() -> SystemConfig:
    global _config_instance
    if _config_instance is None:
        _config_instance = SystemConfig()
    return _config_instance


def reset_config():
    global _config_instance
    _config_instance = None


def list_presets(config: SystemConfig = None) -> list[str]:
    config = config or get_config()
    if not os.path.isdir(config.presets_dir):
        return []
    return sorted(os.path.splitext(f)[0] for f in os.listdir(config.presets_dir) if f.endswith(".yaml"))


def load_preset(name: str, config: SystemConfig = None) -> dict[str, Any]:
    """Problem kind and physics constants stored for a dataset or synthetic law."""
    config = config or get_config()
    path = os.path.join(config.presets_dir, f"{name}.yaml")
    if not os.path.isfile(path):
        raise UnknownDataset(f"No preset named '{name}'", name=name)
    with open(path, encoding="utf-8") as f:
        payload = yaml.safe_load(f) or {}
    if not isinstance(payload, dict):
        raise ValueError(f"Preset '{name}' must be a mapping")
    payload.setdefault("name", name)
    return payload
