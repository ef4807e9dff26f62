"""
Configuration settings for the AV2vec command line

Precedence, highest first: command-line flags, environment (AV2VEC_* or a
.env file), the YAML config file, model defaults.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterator, Optional, Sequence, Tuple, Type, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from data_science.algorithms.errors import ConfigurationError, MissingInputError
from data_science.config import RunConfig


class Settings(BaseModel):
    RUN_DIR: Optional[str] = Field(default=None, description="Overrides run_dir from the config file")
    SEED: Optional[int] = Field(default=None, ge=0, description="Overrides seed from the config file")
    LOG_LEVEL: str = Field(default="INFO", description="Root logger level")


def load_settings(env_file: Union[str, Path] = ".env") -> Settings:
    """Settings from AV2VEC_* environment variables, after loading ``env_file`` if present"""
    if os.path.exists(env_file):
        load_dotenv(env_file)

    settings = Settings()
    run_dir = os.getenv("AV2VEC_RUN_DIR")
    if run_dir:
        settings.RUN_DIR = run_dir
    seed = os.getenv("AV2VEC_SEED")
    if seed:
        try:
            settings.SEED = int(seed)
        except ValueError as e:
            raise ConfigurationError(f"AV2VEC_SEED must be an integer, got {seed!r}") from e
    log_level = os.getenv("AV2VEC_LOG_LEVEL")
    if log_level:
        settings.LOG_LEVEL = log_level.upper()
    return settings


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    settings: Optional[Settings] = None,
    seed: Optional[int] = None,
    run_dir: Optional[str] = None,
) -> RunConfig:
    """Validated RunConfig; any bad or unknown key raises ConfigurationError naming it"""
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"config file {path} not found")
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as e:
            raise ConfigurationError(f"{path} is not valid YAML: {e}") from e
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigurationError(f"{path} must contain a mapping of config sections")
        data = loaded or {}

    settings = settings or Settings()
    if settings.RUN_DIR is not None:
        data["run_dir"] = settings.RUN_DIR
    if settings.SEED is not None:
        data["seed"] = settings.SEED
    if run_dir is not None:
        data["run_dir"] = run_dir
    if seed is not None:
        data["seed"] = seed

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"invalid configuration: {_format_validation_error(e)}") from e


def config_snapshot(config: RunConfig) -> dict:
    return config.model_dump(mode="json")


def write_snapshot(config: RunConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config_snapshot(config), sort_keys=True), encoding="utf-8")
    return path


def iter_config_keys(model: Type[BaseModel], prefix: str = "") -> Iterator[Tuple[str, str]]:
    """(dotted key, description) for every leaf field of a config model"""
    for name, field in model.model_fields.items():
        key = f"{prefix}{name}"
        annotation = field.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            yield from iter_config_keys(annotation, prefix=f"{key}.")
        else:
            yield key, field.description or ""


def config_keys_help(sections: Sequence[str]) -> str:
    """--help epilog listing the config keys a subcommand reads"""
    lines = ["config keys read:"]
    for key, description in iter_config_keys(RunConfig):
        if key.split(".", 1)[0] in sections:
            lines.append(f"  {key:<34} {description}")
    return "\n".join(lines)


@dataclass(frozen=True)
class RunPaths:
    """Layout of a run directory"""
    root: Path

    @property
    def snapshot(self) -> Path:
        return self.root / "config.snapshot"

    @property
    def metrics(self) -> Path:
        return self.root / "metrics.jsonl"

    @property
    def corpus(self) -> Path:
        return self.root / "corpus"

    @property
    def corpus_train(self) -> Path:
        return self.corpus / "train"

    @property
    def corpus_test(self) -> Path:
        return self.corpus / "test"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def last_checkpoint(self) -> Path:
        return self.checkpoints / "last.ckpt"

    @property
    def probe_checkpoint(self) -> Path:
        return self.checkpoints / "probe.ckpt"

    @property
    def cluster_model(self) -> Path:
        return self.root / "cluster" / "centroids.av2k"

    @property
    def report(self) -> Path:
        return self.root / "reports" / "accuracy.csv"

    @classmethod
    def of(cls, config: RunConfig) -> "RunPaths":
        return cls(Path(config.run_dir))
