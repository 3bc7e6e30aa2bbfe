from pathlib import Path
from typing import FrozenSet, Literal, Optional
from functools import lru_cache

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from Models.InstanceRecord import InstanceSource


def get_default_background_check_sources() -> FrozenSet[InstanceSource]:
    # generated images usually come with a plain background already
    return frozenset({InstanceSource.RETRIEVED})


class FilterConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    clip_threshold: float = 0.21
    subtractive: float = Field(0.01, ge=0.0)
    area_min: float = Field(0.05, ge=0.0, le=1.0)
    area_max: float = Field(0.95, ge=0.0, le=1.0)
    background_dominance: float = Field(0.40, ge=0.0, le=1.0)
    color_tolerance: int = Field(5, ge=0, le=255)
    require_background_check_for: FrozenSet[InstanceSource] = Field(
        default_factory=get_default_background_check_sources
    )
    max_per_source: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def area_bounds_ordered(self) -> "FilterConfig":
        if not self.area_min < self.area_max:
            raise ValueError("area_min must be smaller than area_max")
        return self


class ComposeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    n_max: int = Field(20, ge=1, validation_alias=AliasChoices("n_max", "N_max"))
    placement: Literal["random", "reference"] = "random"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    blending: Literal["binary"] = "binary"
    occlusion_drop_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    repeat_factor: int = Field(1, ge=0)
    scale_min: float = Field(0.02, gt=0.0, le=1.0)
    scale_max: float = Field(0.95, gt=0.0, le=1.0)
    sources: Optional[FrozenSet[InstanceSource]] = None

    @model_validator(mode="after")
    def scale_bounds_ordered(self) -> "ComposeConfig":
        if self.scale_min > self.scale_max:
            raise ValueError("scale_min must not exceed scale_max")
        return self


class PathsConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    pool_manifest: Optional[Path] = None
    source_dataset: Optional[Path] = None
    dataset_image_root: Optional[Path] = None
    pool_image_root: Optional[Path] = None
    output_dir: Optional[Path] = None
    stats_sidecar: Optional[Path] = None


class PipelineConfig(BaseSettings):
    # Execution
    JOBS: int = Field(1, ge=1)

    # Logging Configuration
    LOG_LEVEL: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Stage configuration
    paths: PathsConfig = Field(default_factory=PathsConfig)
    filter: FilterConfig = Field(default_factory=FilterConfig)
    compose: ComposeConfig = Field(default_factory=ComposeConfig)

    model_config = SettingsConfigDict(
        env_prefix="XPASTE_",
        env_nested_delimiter="__",
        case_sensitive=False,
        extra="forbid",
    )

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls,
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ):
        # config file values arrive as init kwargs; environment wins over them
        return env_settings, init_settings


@lru_cache()
def get_pipeline_config() -> PipelineConfig:
    return PipelineConfig()
