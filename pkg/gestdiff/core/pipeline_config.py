"""
Declarative pipeline configuration.

One document holds every tunable of the pipeline. The on-disk form is a UTF-8
key-value document with `section.key = value` lines; `to_kv_text()` writes the
resolved configuration back in the same form so a logged config reproduces a run.
"""
from typing import Any, Dict, List, Literal, Optional
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from gestdiff.core.errors import UsageError


logger = logging.getLogger(__name__)


class ConfigError(UsageError):
    """Raised when a configuration document is malformed or invalid."""
    pass


class _Section(BaseModel):
    """Base for config sections: immutable, unknown keys rejected."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="before")
    @classmethod
    def _blank_to_none(cls, data: Any) -> Any:
        # Empty values in the key-value document mean "unset"
        if isinstance(data, dict):
            return {key: (None if value == "" else value) for key, value in data.items()}
        return data


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class MotionSettings(_Section):
    """Motion parsing, pose representation and Hampel detection."""
    include_root_translation: bool = False
    tpose_path: Optional[str] = None  # BVH whose first frame defines the T-pose
    hampel_window: int = Field(15, ge=3)
    hampel_threshold: float = Field(3.0, gt=0)
    hampel_joint_patterns: List[str] = Field(default_factory=lambda: ["wrist", "hip"])
    mad_floor: float = Field(1e-9, gt=0)

    @field_validator("hampel_joint_patterns", mode="before")
    @classmethod
    def _split_patterns(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("hampel_window")
    @classmethod
    def _odd_window(cls, value: int) -> int:
        if value % 2 == 0:
            raise ValueError(f"hampel_window must be odd (got: {value})")
        return value


class SignalSettings(_Section):
    """Audio repair and gating."""
    sample_rate: int = Field(16000, gt=0)
    zero_eps: float = Field(0.0, ge=0)
    ramp_seconds: float = Field(0.2, ge=0)
    ramp_shape: Literal["linear", "raised_cosine"] = "linear"


class EmbeddingSettings(_Section):
    """Embedding streams and the built-in fallback featurizers."""
    dim: int = Field(768, gt=0)
    audio_rate: float = Field(50.0, gt=0)
    motion_rate: float = Field(30.0, gt=0)
    fallback_seed: int = 1234
    n_mels: int = Field(80, gt=0)


class CsmpConfig(_Section):
    """Contrastive speech-and-motion pretraining."""
    context_length: int = Field(500, gt=0)
    hop: int = Field(250, gt=0)
    speech_dim: int = Field(1536, gt=0)
    model_dim: int = Field(256, gt=0)
    layers: int = Field(4, gt=0)
    heads: int = Field(4, gt=0)
    ff_dim: int = Field(512, gt=0)
    max_relative_distance: int = Field(64, gt=0)
    projection_dim: int = 512
    temperature_init: float = Field(0.07, gt=0)
    min_temperature: float = Field(0.01, gt=0)
    batch_size: int = Field(64, gt=0)
    learning_rate: float = Field(1e-4, gt=0)
    train_steps: int = Field(10000, ge=0)
    log_interval: int = Field(50, gt=0)

    @model_validator(mode="after")
    def _check_shapes(self) -> "CsmpConfig":
        if self.hop > self.context_length:
            raise ValueError(f"csmp.hop ({self.hop}) must not exceed csmp.context_length ({self.context_length})")
        if self.model_dim % self.heads != 0:
            raise ValueError(f"csmp.model_dim ({self.model_dim}) must be divisible by csmp.heads ({self.heads})")
        if self.projection_dim != 512:
            raise ValueError("csmp.projection_dim must be 512 so two agents concatenate to 1024")
        return self


class DiffusionSettings(_Section):
    """Denoiser architecture, noise schedule, training and sampling."""
    schedule_kind: Literal["linear", "quadratic"] = "linear"
    num_steps: int = Field(1000, ge=1)
    beta_start: float = 1e-4
    beta_end: float = 0.02
    residual_blocks: int = Field(15, gt=0)
    layers_per_block: int = Field(3, gt=0)
    model_dim: int = Field(256, gt=0)
    heads: int = Field(4, gt=0)
    ff_dim: int = Field(512, gt=0)
    max_relative_distance: int = Field(64, gt=0)
    step_embedding_dim: int = Field(128, gt=0)
    window_frames: int = Field(120, gt=0)
    window_hop: int = Field(60, gt=0)
    crossfade_frames: int = Field(30, ge=0)
    guidance_dropout: float = Field(0.1, ge=0, lt=1)
    guidance_scale: float = Field(1.0, ge=0)
    batch_size: int = Field(32, gt=0)
    learning_rate: float = Field(2e-4, gt=0)
    train_steps: int = Field(10000, ge=0)
    log_interval: int = Field(50, gt=0)
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    validation_interval: int = Field(500, gt=0)

    @model_validator(mode="after")
    def _check_shapes(self) -> "DiffusionSettings":
        if not 0 < self.beta_start <= self.beta_end < 1:
            raise ValueError("diffusion schedule requires 0 < beta_start <= beta_end < 1")
        if self.model_dim % self.heads != 0:
            raise ValueError(f"diffusion.model_dim ({self.model_dim}) must be divisible by diffusion.heads ({self.heads})")
        if self.crossfade_frames >= self.window_frames:
            raise ValueError("diffusion.crossfade_frames must be smaller than diffusion.window_frames")
        return self


class PrepSettings(_Section):
    """Dataset preparation."""
    exclusion_fraction: float = Field(0.0, ge=0, le=1)  # clips flagged above this fraction are listed


class StatsSettings(_Section):
    """Objective motion statistics."""
    wrist_patterns: List[str] = Field(default_factory=lambda: ["wrist"])
    histogram_bins: int = Field(20, gt=0)
    histogram_max_speed: float = Field(500.0, gt=0)

    @field_validator("wrist_patterns", mode="before")
    @classmethod
    def _split_patterns(cls, value: Any) -> Any:
        return _split_list(value)


class PipelineConfig(BaseModel):
    """All tunables of the pipeline in one declarative document."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(0, ge=0)
    motion: MotionSettings = Field(default_factory=MotionSettings)
    signal: SignalSettings = Field(default_factory=SignalSettings)
    embeddings: EmbeddingSettings = Field(default_factory=EmbeddingSettings)
    csmp: CsmpConfig = Field(default_factory=CsmpConfig)
    diffusion: DiffusionSettings = Field(default_factory=DiffusionSettings)
    prep: PrepSettings = Field(default_factory=PrepSettings)
    stats: StatsSettings = Field(default_factory=StatsSettings)

    @model_validator(mode="after")
    def _check_cross_section(self) -> "PipelineConfig":
        if self.csmp.speech_dim != 2 * self.embeddings.dim:
            raise ValueError(
                f"csmp.speech_dim ({self.csmp.speech_dim}) must equal audio+text "
                f"embedding width 2 * embeddings.dim ({2 * self.embeddings.dim})"
            )
        return self

    @property
    def conditioning_dim(self) -> int:
        """Width of the per-frame conditioning c_t (main + interlocutor)."""
        return 2 * self.csmp.projection_dim

    @classmethod
    def from_kv_text(cls, text: str) -> "PipelineConfig":
        """
        Parse a key-value configuration document.

        Args:
            text: UTF-8 document of `section.key = value` lines

        Returns:
            Validated PipelineConfig

        Raises:
            ConfigError: If a line is malformed or a key/value is invalid
        """
        data: Dict[str, Any] = {}
        for line_number, raw_line in enumerate(text.splitlines(), start=1):
            line = raw_line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_number}: expected 'key = value' (got: {raw_line!r})")
            key, value = (part.strip() for part in line.split("=", 1))
            if "." in key:
                section, field = key.split(".", 1)
                if section not in cls.model_fields or section == "seed":
                    raise ConfigError(f"line {line_number}: unknown section '{section}'")
                data.setdefault(section, {})[field] = value
            else:
                data[key] = value
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PipelineConfig":
        """Validate a nested dictionary, wrapping validation failures in ConfigError."""
        try:
            return cls.model_validate(data)
        except ValidationError as error:
            raise ConfigError(f"invalid configuration: {error}") from error

    def to_kv_text(self) -> str:
        """Render the resolved configuration as a key-value document."""
        lines = [f"seed = {self.seed}"]
        for section_name in ("motion", "signal", "embeddings", "csmp", "diffusion", "prep", "stats"):
            section = getattr(self, section_name)
            for field_name in type(section).model_fields:
                lines.append(f"{section_name}.{field_name} = {_format_value(getattr(section, field_name))}")
        return "\n".join(lines) + "\n"

    def with_overrides(self, overrides: Dict[str, Any]) -> "PipelineConfig":
        """
        Return a copy with dotted-key overrides applied (e.g. CLI flags).

        Args:
            overrides: Mapping like {"seed": 3, "diffusion.guidance_scale": 2.0}; None values are skipped
        """
        data = self.model_dump()
        for key, value in overrides.items():
            if value is None:
                continue
            if "." in key:
                section, field = key.split(".", 1)
                if not isinstance(data.get(section), dict):
                    raise ConfigError(f"unknown section '{section}' in override '{key}'")
                data[section][field] = value
            else:
                data[key] = value
        return self.from_dict(data)

    def log_resolved(self) -> None:
        """Log every resolved key verbatim."""
        for line in self.to_kv_text().splitlines():
            logger.info("config %s", line)


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(item) for item in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_pipeline_config(path: Optional[str]) -> PipelineConfig:
    """
    Load a configuration document, or defaults when no path is given.

    Raises:
        ConfigError: If the file cannot be read or is invalid
    """
    if path is None:
        return PipelineConfig()
    try:
        with open(path, "r", encoding="utf-8") as handle:
            text = handle.read()
    except OSError as error:
        raise ConfigError(f"cannot read config {path}: {error}") from error
    return PipelineConfig.from_kv_text(text)
