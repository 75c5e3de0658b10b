"""Configuration management for contraction-tuner."""

import os
from typing import List, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import BackendKind, HistogramWeighting


class BackendConfig(BaseSettings):
    """Evaluation backend settings, overridable through CTUNER_* variables."""

    model_config = SettingsConfigDict(env_prefix="CTUNER_", extra="ignore")

    backend: BackendKind = Field(default=BackendKind.COSTMODEL, description="costmodel or timed")
    warmup_iters: int = Field(default=20, ge=0, description="Untimed executions before sampling")
    timed_iters: int = Field(default=10, ge=1, description="Timed samples; the minimum is reported")
    min_sample_ms: float = Field(default=1.0, gt=0, description="Minimum duration of one timed sample")
    kernel_points: int = Field(default=512, ge=1, description="Iteration points per vectorised kernel call")
    peak_trials: int = Field(default=10, ge=1, description="Trials of the peak kernel")
    seed: int = Field(default=0, description="Seed for input tensor initialisation")


class CostModelConfig(BaseModel):
    """Constants of the analytic cache cost model."""

    line_bytes: int = 64
    element_bytes: int = 4
    l1_bytes: int = 32 * 1024
    l2_bytes: int = 1024 * 1024
    l3_bytes: int = 32 * 1024 * 1024
    penalties: Tuple[float, float, float, float] = (1.0, 10.0, 40.0, 100.0)
    frequency_ghz: float = Field(default=1.0, gt=0)
    flops_per_cycle: float = Field(default=2.0, gt=0)


class SearchDefaults(BaseModel):
    """Defaults applied to tuning runs."""

    depth: int = Field(default=10, ge=1)
    budget_s: float = Field(default=60.0, gt=0)
    workers: int = Field(default=4, ge=1, description="Threads used by tune under the cost model")
    seed: int = 0
    histogram_weighting: HistogramWeighting = HistogramWeighting.REFERENCES


class TrainConfig(BaseModel):
    """Deep Q-learning hyper-parameters."""

    learning_rate: float = Field(default=1e-3, gt=0)
    gamma: float = Field(default=0.9, ge=0.0, le=1.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_decay_fraction: float = Field(default=0.5, gt=0.0, le=1.0)
    target_sync: int = Field(default=50, ge=1, description="Gradient updates between target syncs")
    batch_size: int = Field(default=64, ge=1)
    iterations: int = Field(default=300, ge=0)
    updates_per_iteration: int = Field(default=8, ge=0)
    num_actors: int = Field(default=2, ge=1)
    hidden: List[int] = Field(default_factory=lambda: [256, 256])
    buffer_capacity: int = Field(default=50_000, ge=1)
    alpha: float = Field(default=0.6, ge=0.0)
    beta: float = Field(default=0.4, ge=0.0, le=1.0)
    learning_starts: Optional[int] = Field(default=None, description="Buffer size before updates; batch size if unset")
    early_stop_patience: int = Field(default=0, ge=0, description="0 disables early stopping")
    early_stop_tolerance: float = Field(default=1e-3, ge=0.0)
    seed: int = 0
    split: str = "train"
    episode_length: int = Field(default=10, ge=1)

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError(f"hidden widths must be positive: {value}")
        return value

    @field_validator("split")
    @classmethod
    def _known_split(cls, value: str) -> str:
        if value not in ("train", "test", "all"):
            raise ValueError(f"split must be train, test or all, got {value}")
        return value


class DatasetConfig(BaseModel):
    """Matmul dataset generator settings."""

    seed: int = 0
    low: int = Field(default=64, ge=1)
    high: int = Field(default=256, ge=1)
    step: int = Field(default=16, ge=1)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)


class LoggingConfig(BaseModel):
    """Logging configuration settings."""

    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file_path: Optional[str] = None


class Config(BaseModel):
    """Main configuration class."""

    backend: BackendConfig = Field(default_factory=BackendConfig)
    cost_model: CostModelConfig = Field(default_factory=CostModelConfig)
    search: SearchDefaults = Field(default_factory=SearchDefaults)
    train: TrainConfig = Field(default_factory=TrainConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("backend", mode="before")
    @classmethod
    def _merge_environment(cls, value: object) -> object:
        # File values win; unset fields still come from CTUNER_* variables.
        if isinstance(value, dict):
            return BackendConfig(**value)
        return value

    @classmethod
    def load_from_file(cls, config_path: Optional[str] = None) -> "Config":
        """Load configuration from YAML file."""
        if config_path is None:
            possible_paths = [
                "config/config.yaml",
                "config.yaml",
                os.path.expanduser("~/.contraction-tuner/config.yaml"),
                "/etc/contraction-tuner/config.yaml",
            ]

            for path in possible_paths:
                if os.path.exists(path):
                    config_path = path
                    break
            else:
                return cls()

        with open(config_path, "r") as f:
            config_data = yaml.safe_load(f) or {}

        return cls(**config_data)

    def save_to_file(self, config_path: str) -> None:
        """Save configuration to YAML file."""
        config_dir = os.path.dirname(config_path)
        if config_dir:
            os.makedirs(config_dir, exist_ok=True)

        with open(config_path, "w") as f:
            yaml.safe_dump(self.model_dump(mode="json"), f, default_flow_style=False, indent=2, sort_keys=False)
