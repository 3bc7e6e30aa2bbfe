import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from pydantic import ValidationError

from Config import ComposeConfig, PipelineConfig, get_pipeline_config
from exceptions import ConfigError

logger = logging.getLogger(__name__)


def _key_path(location: Iterable[Any]) -> str:
    return ".".join(str(part) for part in location) or "<root>"


class ConfigManager:
    def __init__(self, config_path: Optional[Union[str, Path]] = None):
        self.config_path = Path(config_path) if config_path is not None else None

    def read_config_file(self) -> Dict[str, Any]:
        """Raw JSON config values, empty when no file is configured"""
        if self.config_path is None:
            return {}
        if not self.config_path.is_file():
            raise ConfigError(f"Config file not found: {self.config_path}", ["--config"])
        try:
            data = json.loads(self.config_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"Malformed config file {self.config_path}: {e.msg} at line {e.lineno}", ["<root>"]) from e
        if not isinstance(data, dict):
            raise ConfigError("Config file must contain a JSON object", ["<root>"])
        return data

    def load(self) -> PipelineConfig:
        """Build the pipeline config from the file, with XPASTE_* environment overrides"""
        try:
            if self.config_path is None:
                config = get_pipeline_config()
            else:
                config = PipelineConfig(**self.read_config_file())
        except ValidationError as e:
            problems = [f"{_key_path(err['loc'])}: {err['msg']}" for err in e.errors()]
            raise ConfigError(
                f"Invalid configuration: {'; '.join(problems)}",
                [_key_path(err["loc"]) for err in e.errors()],
            ) from e
        logger.debug(f"Loaded configuration from {self.config_path or 'defaults'}")
        return config

    @staticmethod
    def apply_overrides(config: PipelineConfig, seed: Optional[int] = None, jobs: Optional[int] = None,
                        log_level: Optional[str] = None) -> PipelineConfig:
        """Command-line flags win over file and environment values"""
        update: Dict[str, Any] = {}
        try:
            if seed is not None:
                compose = config.compose.model_dump()
                compose["seed"] = seed
                update["compose"] = ComposeConfig(**compose)
            if jobs is not None:
                if jobs < 1:
                    raise ConfigError("--jobs must be at least 1", ["JOBS"])
                update["JOBS"] = jobs
        except ValidationError as e:
            raise ConfigError(f"Invalid --seed: {e.errors()[0]['msg']}", ["compose.seed"]) from e
        if log_level is not None:
            update["LOG_LEVEL"] = log_level.upper()
        return config.model_copy(update=update)

    @staticmethod
    def validate_paths(config: PipelineConfig, required: Iterable[str]) -> None:
        """Raise ConfigError naming every required `paths.*` key that is unset or missing on disk"""
        missing: List[str] = []
        for key in required:
            value = getattr(config.paths, key)
            if value is None or not Path(value).exists():
                missing.append(f"paths.{key}")
        if missing:
            raise ConfigError(f"Missing input paths: {', '.join(missing)}", missing)

    @staticmethod
    def create_required_directories(config: PipelineConfig) -> None:
        """Create the output directory and the stats sidecar's parent"""
        for path in (config.paths.output_dir, config.paths.stats_sidecar and config.paths.stats_sidecar.parent):
            if path is not None and not Path(path).exists():
                Path(path).mkdir(parents=True, exist_ok=True)
                logger.info(f"Created directory: {path}")
