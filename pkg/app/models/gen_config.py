"""Generator configuration for synthetic cryptographic traces."""
from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.config import settings
from app.models.labels import Category


DEFAULT_STRONG_ALGORITHMS: Tuple[int, ...] = (1, 2, 3, 4)
DEFAULT_WEAK_ALGORITHMS: Tuple[int, ...] = (101, 102, 103, 104)
DEFAULT_ALGORITHM_STRENGTHS: Dict[int, int] = {
    1: 256, 2: 256, 3: 384, 4: 512,
    101: 128, 102: 112, 103: 80, 104: 64,
}

FULL_SCALE_COUNTS: Dict[Category, int] = {
    Category.NORMAL: 120_000,
    Category.REUSE_ONLY: 20_000,
    Category.DOWNGRADE_ONLY: 20_000,
    Category.LIFETIME_ONLY: 30_000,
    Category.REUSE_DOWNGRADE: 5_000,
    Category.REUSE_LIFETIME: 5_000,
    Category.DOWNGRADE_LIFETIME: 5_000,
    Category.REUSE_DOWNGRADE_LIFETIME: 5_000,
}


def _zero_counts() -> Dict[Category, int]:
    return {category: 0 for category in Category}


class GenConfig(BaseModel):
    """Parameters of the trace generator.

    Temporal quantities are in seconds. ``temporal_scale`` multiplies the mean
    inter-arrival gap, the durations and the lifetime range together.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    category_counts: Dict[Category, int] = Field(default_factory=_zero_counts)
    mean_length: float = Field(default=20.0, gt=0)
    length_bounds: Tuple[int, int] = (5, 60)
    inter_arrival_rate: float = Field(default=1.0, gt=0)
    duration_log_mu: float = -4.0
    duration_log_sigma: float = Field(default=0.75, ge=0)
    lifetime_range: Tuple[float, float] = (10.0, 60.0)
    strong_algorithms: List[int] = Field(default_factory=lambda: list(DEFAULT_STRONG_ALGORITHMS))
    weak_algorithms: List[int] = Field(default_factory=lambda: list(DEFAULT_WEAK_ALGORITHMS))
    algorithm_strengths: Dict[int, int] = Field(default_factory=lambda: dict(DEFAULT_ALGORITHM_STRENGTHS))
    downgrade_map: Dict[int, int] = Field(default_factory=dict)
    noise_level: float = Field(default=0.1, ge=0.0, le=0.5)
    temporal_scale: float = Field(default=1.0, gt=0)
    keygen_probability: float = Field(default=0.1, ge=0.0, lt=1.0)
    expiry_margin: float = Field(default=0.2, ge=0.0, lt=1.0)
    strength_threshold_bits: int = Field(default_factory=lambda: settings.strength_threshold_bits, gt=0)
    max_injection_retries: int = Field(default_factory=lambda: settings.max_injection_retries, ge=1)
    seed: int = Field(default_factory=lambda: settings.default_seed, ge=0, lt=2**64)

    @model_validator(mode="before")
    @classmethod
    def _fill_counts(cls, data):
        if isinstance(data, dict) and "category_counts" in data:
            counts = _zero_counts()
            for key, value in dict(data["category_counts"]).items():
                counts[Category(key)] = value
            data = {**data, "category_counts": counts}
        return data

    @model_validator(mode="after")
    def _check_invariants(self) -> "GenConfig":
        for category, count in self.category_counts.items():
            if count < 0:
                raise ValueError(f"count for {category.value} must be >= 0, got {count}")
            if category.has_reuse and count == 1:
                raise ValueError(f"{category.value} needs 0 or at least 2 traces to form reuse pairs")
        low, high = self.length_bounds
        if not 0 < low <= high:
            raise ValueError(f"length bounds must satisfy 0 < min <= max, got {self.length_bounds}")
        lo, hi = self.lifetime_range
        if not 0 < lo < hi:
            raise ValueError(f"lifetime range must satisfy 0 < lo < hi, got {self.lifetime_range}")
        strong, weak = set(self.strong_algorithms), set(self.weak_algorithms)
        if not strong or not weak:
            raise ValueError("strong and weak algorithm sets must be nonempty")
        if strong & weak:
            raise ValueError(f"strong and weak algorithm sets overlap: {sorted(strong & weak)}")
        threshold = self.strength_threshold_bits
        for algorithm_id in strong | weak:
            if algorithm_id not in self.algorithm_strengths:
                raise ValueError(f"algorithm {algorithm_id} has no declared strength")
        for algorithm_id in strong:
            if self.algorithm_strengths[algorithm_id] < threshold:
                raise ValueError(f"strong algorithm {algorithm_id} is below {threshold} bits")
        for algorithm_id in weak:
            if self.algorithm_strengths[algorithm_id] >= threshold:
                raise ValueError(f"weak algorithm {algorithm_id} is not below {threshold} bits")
        if self.downgrade_map:
            if set(self.downgrade_map) != strong:
                raise ValueError("downgrade map must cover exactly the strong algorithm set")
            if not set(self.downgrade_map.values()) <= weak:
                raise ValueError("downgrade map must target weak algorithms only")
        return self

    @property
    def total_traces(self) -> int:
        return sum(self.category_counts.values())

    @property
    def resolved_downgrade_map(self) -> Dict[int, int]:
        """Strong → weak bijection (sorted pairing when none is given)."""
        if self.downgrade_map:
            return dict(self.downgrade_map)
        strong = sorted(self.strong_algorithms)
        weak = sorted(self.weak_algorithms)
        return {algorithm_id: weak[i % len(weak)] for i, algorithm_id in enumerate(strong)}

    @property
    def mean_gap(self) -> float:
        return self.temporal_scale / self.inter_arrival_rate

    @property
    def scaled_lifetime_range(self) -> Tuple[float, float]:
        lo, hi = self.lifetime_range
        return (lo * self.temporal_scale, hi * self.temporal_scale)

    def with_counts(self, counts: Dict[Category, int]) -> "GenConfig":
        """Copy of this config with different per-category counts."""
        return GenConfig.model_validate({**self.model_dump(), "category_counts": counts})

    def scaled(self, factor: float) -> "GenConfig":
        """Copy of this config with its temporal scale multiplied by ``factor``."""
        return GenConfig.model_validate({**self.model_dump(), "temporal_scale": self.temporal_scale * factor})

    @classmethod
    def full_scale(cls, **overrides) -> "GenConfig":
        """Composition of the 210,000-trace corpus."""
        return cls(category_counts=dict(FULL_SCALE_COUNTS), **overrides)

    @classmethod
    def desk_scale(cls, fraction: float = 0.1, **overrides) -> "GenConfig":
        """Full composition scaled down (default 10%: 21,000 traces)."""
        counts = {category: int(round(count * fraction)) for category, count in FULL_SCALE_COUNTS.items()}
        return cls(category_counts=counts, **overrides)
