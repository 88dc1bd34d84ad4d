"""Application configuration settings."""
from typing import Literal

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Lab settings loaded from environment variables (prefix ``INTACT_``)."""

    model_config = SettingsConfigDict(
        env_prefix="INTACT_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )

    # Application Settings
    log_level: str = "INFO"
    tool_version: str = "1.0.0"
    default_seed: int = 20240611
    output_dir: str = "runs"

    # Annotation Settings
    strength_threshold_bits: int = 256

    # Corpus Generation
    max_injection_retries: int = 16

    # Training Defaults
    optimizer: Literal["sgd", "adam"] = "adam"
    learning_rate: float = 1e-3
    batch_size: int = 512
    max_epochs: int = 20
    patience: int = 3

    # Isolation Forest Defaults
    iforest_trees: int = 100
    iforest_subsample: int = 256
    iforest_contamination: float = 0.05

    # Evaluation Defaults
    lifetime_percentile: float = 95.0
    flow_shift_factors: list[float] = [2.0, 3.0]
    trace_shift_factors: list[float] = [1.5, 3.0]
    shift_corpus_traces: int = 10_000


# Global settings instance
settings = Settings()
