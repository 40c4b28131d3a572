"""
Configuration module for process-level settings.
Values are loaded from environment variables; pipeline tunables live in
pipeline_config.PipelineConfig.
"""
import os


class Config:
    """Process configuration loaded from environment variables."""

    # Logging
    LOG_LEVEL: str = os.getenv("GESTDIFF_LOG_LEVEL", "INFO").upper()
    LOG_FORMAT: str = "%(asctime)s %(levelname)s %(name)s: %(message)s"

    # Parallelism
    WORKERS: int = int(os.getenv("GESTDIFF_WORKERS", "4"))  # per-clip prep workers
    TORCH_THREADS: int = int(os.getenv("GESTDIFF_TORCH_THREADS", "1"))  # 1 keeps runs bit-reproducible

    # Artifact names shared by the services
    RESOLVED_CONFIG_NAME: str = "resolved_config.txt"
    TRAINING_LOG_NAME: str = "training_log.tsv"
    CSMP_CHECKPOINT_NAME: str = "csmp.ckpt"
    DIFFUSION_CHECKPOINT_NAME: str = "diffusion.ckpt"

    @classmethod
    def validate(cls) -> None:
        """
        Validates process configuration values.

        Raises:
            ValueError: If any configuration value is invalid.
        """
        if cls.LOG_LEVEL not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"GESTDIFF_LOG_LEVEL must be a logging level name (got: {cls.LOG_LEVEL})")
        if cls.WORKERS < 1:
            raise ValueError(f"GESTDIFF_WORKERS must be >= 1 (got: {cls.WORKERS})")
        if cls.TORCH_THREADS < 1:
            raise ValueError(f"GESTDIFF_TORCH_THREADS must be >= 1 (got: {cls.TORCH_THREADS})")


config = Config()
