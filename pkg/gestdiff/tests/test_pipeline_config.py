"""
Tests for the key-value pipeline configuration and process settings.
"""

import pytest

from gestdiff.core.config import Config
from gestdiff.core.errors import UsageError
from gestdiff.core.pipeline_config import ConfigError, PipelineConfig, load_pipeline_config


def test_defaults():
    settings = PipelineConfig()

    assert settings.seed == 0
    assert settings.csmp.context_length == 500
    assert settings.csmp.speech_dim == 1536
    assert settings.diffusion.num_steps == 1000
    assert settings.motion.hampel_joint_patterns == ["wrist", "hip"]
    assert settings.conditioning_dim == 1024


def test_kv_document_is_parsed():
    text = """
    # run settings
    seed = 3
    diffusion.guidance_scale = 2.5
    motion.hampel_joint_patterns = hand, wrist
    motion.include_root_translation = true
    """

    settings = PipelineConfig.from_kv_text(text)

    assert settings.seed == 3
    assert settings.diffusion.guidance_scale == 2.5
    assert settings.motion.hampel_joint_patterns == ["hand", "wrist"]
    assert settings.motion.include_root_translation is True


def test_resolved_document_reproduces_configuration():
    settings = PipelineConfig.from_kv_text("seed = 9\ncsmp.learning_rate = 0.0003\nstats.histogram_bins = 7\n")

    assert PipelineConfig.from_kv_text(settings.to_kv_text()) == settings


def test_unset_optional_value_survives_round_trip():
    text = PipelineConfig().to_kv_text()

    assert "motion.tpose_path = \n" in text
    assert PipelineConfig.from_kv_text(text).motion.tpose_path is None


@pytest.mark.parametrize("text,message", [
    ("csmp.unknown = 1\n", "unknown"),
    ("bogus.key = 1\n", "unknown section"),
    ("seed 3\n", "line 1"),
    ("motion.hampel_window = 4\n", "odd"),
    ("seed = -1\n", "seed"),
    ("embeddings.dim = 100\n", "speech_dim"),
    ("csmp.projection_dim = 256\n", "512"),
    ("diffusion.crossfade_frames = 200\n", "crossfade_frames"),
    ("diffusion.beta_start = 0.5\ndiffusion.beta_end = 0.1\n", "beta_start"),
])
def test_invalid_documents_are_rejected(text, message):
    with pytest.raises(ConfigError, match=message):
        PipelineConfig.from_kv_text(text)


def test_config_errors_are_usage_errors():
    assert issubclass(ConfigError, UsageError)


def test_overrides_skip_unset_values():
    settings = PipelineConfig().with_overrides({"seed": 5, "diffusion.guidance_scale": None})

    assert settings.seed == 5
    assert settings.diffusion.guidance_scale == 1.0


def test_override_of_unknown_section_is_rejected():
    with pytest.raises(ConfigError, match="unknown section"):
        PipelineConfig().with_overrides({"nope.value": 1})


def test_missing_config_file_is_reported(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        load_pipeline_config(str(tmp_path / "absent.txt"))


def test_config_file_is_loaded(tmp_path):
    path = tmp_path / "run.txt"
    path.write_text("seed = 11\n", encoding="utf-8")

    assert load_pipeline_config(str(path)).seed == 11
    assert load_pipeline_config(None) == PipelineConfig()


def test_process_config_rejects_zero_workers(monkeypatch):
    monkeypatch.setattr(Config, "WORKERS", 0)

    with pytest.raises(ValueError, match="GESTDIFF_WORKERS"):
        Config.validate()


def test_process_config_rejects_unknown_log_level(monkeypatch):
    monkeypatch.setattr(Config, "LOG_LEVEL", "LOUD")

    with pytest.raises(ValueError, match="GESTDIFF_LOG_LEVEL"):
        Config.validate()
