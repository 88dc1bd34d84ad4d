"""Training and run configuration models."""
import hashlib
import json
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.models.gen_config import GenConfig


class TrainConfig(BaseModel):
    """Mini-batch optimization settings shared by every neural model."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    optimizer: Literal["sgd", "adam"] = Field(default_factory=lambda: settings.optimizer)
    learning_rate: float = Field(default_factory=lambda: settings.learning_rate, gt=0)
    batch_size: int = Field(default_factory=lambda: settings.batch_size, ge=1)
    max_epochs: int = Field(default_factory=lambda: settings.max_epochs, ge=1)
    patience: int = Field(default_factory=lambda: settings.patience, ge=1)
    betas: Tuple[float, float] = (0.9, 0.999)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0)


class IsolationForestConfig(BaseModel):
    """Isolation forest hyperparameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_trees: int = Field(default_factory=lambda: settings.iforest_trees, ge=1)
    subsample: int = Field(default_factory=lambda: settings.iforest_subsample)
    contamination: float = Field(default_factory=lambda: settings.iforest_contamination, gt=0, lt=0.5)


class RunConfig(BaseModel):
    """Parameters of one CLI run; unknown keys are rejected."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)
    gen: GenConfig = Field(default_factory=GenConfig.desk_scale)
    train: TrainConfig = Field(default_factory=TrainConfig)
    iforest: IsolationForestConfig = Field(default_factory=IsolationForestConfig)
    split_mode: Literal["temporal", "random"] = "random"
    split_fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    flow_split_fractions: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    percentile: float = Field(default_factory=lambda: settings.lifetime_percentile, gt=0, le=100)
    flow_shift_factors: List[float] = Field(default_factory=lambda: list(settings.flow_shift_factors))
    trace_shift_factors: List[float] = Field(default_factory=lambda: list(settings.trace_shift_factors))
    shift_traces: int = Field(default_factory=lambda: settings.shift_corpus_traces, ge=0)
    flows_csv: Optional[str] = None
    flow_rows: int = Field(default=10_000, ge=0)
    models: List[str] = Field(
        default_factory=lambda: ["iforest", "deep_svdd", "ae_nonlinear", "ae_linear", "supervised", "intact"]
    )
    data_paths: List[Literal["synthetic", "flows"]] = Field(default_factory=lambda: ["synthetic", "flows"])

    @model_validator(mode="before")
    @classmethod
    def _propagate_seed(cls, data):
        # One master seed drives generation, splitting and training unless overridden.
        if not isinstance(data, dict) or "seed" not in data:
            return data
        seed = data["seed"]
        data = dict(data)
        if "gen" not in data:
            data["gen"] = GenConfig.desk_scale(seed=seed)
        elif isinstance(data["gen"], dict) and "seed" not in data["gen"]:
            data["gen"] = {**data["gen"], "seed": seed}
        if "train" not in data:
            data["train"] = {"seed": seed}
        elif isinstance(data["train"], dict) and "seed" not in data["train"]:
            data["train"] = {**data["train"], "seed": seed}
        return data

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with a new master seed applied to every section."""
        payload = self.model_dump(mode="json")
        payload["seed"] = seed
        payload["gen"]["seed"] = seed
        payload["train"]["seed"] = seed
        return RunConfig.model_validate(payload)

    @model_validator(mode="after")
    def _check_fractions(self) -> "RunConfig":
        for name in ("split_fractions", "flow_split_fractions"):
            fractions = getattr(self, name)
            if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
                raise ValueError(f"{name} must be positive and sum to 1, got {fractions}")
        for factor in (*self.flow_shift_factors, *self.trace_shift_factors):
            if factor <= 0:
                raise ValueError(f"shift factors must be positive, got {factor}")
        return self

    def canonical_json(self) -> str:
        """Key-sorted compact JSON used for hashing and manifests."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
