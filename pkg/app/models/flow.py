"""Flow tables, feature matrices and standardization statistics."""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict


FLOW_FEATURES: tuple = (
    "duration",
    "fwd_packets",
    "bwd_packets",
    "fwd_mean_pkt_size",
    "bwd_mean_pkt_size",
    "bytes_per_sec",
    "pkts_per_sec",
)
FLOW_LABEL = "label"
BENIGN_LABEL = "BENIGN"


@dataclass
class FlowTable:
    """Cleaned flow records in chronological order.

    ``frame`` holds the seven numeric features plus the raw ``label`` string.
    """
    frame: pd.DataFrame
    n_dropped: int = 0
    source: str = "<memory>"

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def durations(self) -> np.ndarray:
        return self.frame["duration"].to_numpy(dtype=np.float64)

    @property
    def benign_mask(self) -> np.ndarray:
        return (self.frame[FLOW_LABEL].astype(str).str.strip().str.upper() == BENIGN_LABEL).to_numpy()

    def slice(self, start: int, stop: int) -> "FlowTable":
        return FlowTable(
            frame=self.frame.iloc[start:stop].reset_index(drop=True),
            n_dropped=0,
            source=f"{self.source}[{start}:{stop}]",
        )


@dataclass
class FeatureMatrix:
    """Row-major numeric matrix with row ids, column names and label vectors."""
    values: np.ndarray
    row_ids: np.ndarray
    columns: List[str]
    labels: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.row_ids = np.asarray(self.row_ids)
        if self.values.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape[1] != len(self.columns):
            raise ValueError(
                f"{self.values.shape[1]} value columns but {len(self.columns)} column names"
            )
        if len(self.row_ids) != self.values.shape[0]:
            raise ValueError("row id count does not match row count")
        for name, vector in self.labels.items():
            if len(vector) != self.values.shape[0]:
                raise ValueError(f"label vector '{name}' does not match row count")

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def take(self, index: np.ndarray) -> "FeatureMatrix":
        """Rows selected by an integer or boolean index, labels included."""
        return FeatureMatrix(
            values=self.values[index],
            row_ids=self.row_ids[index],
            columns=list(self.columns),
            labels={name: vector[index] for name, vector in self.labels.items()},
        )

    def with_values(self, values: np.ndarray) -> "FeatureMatrix":
        return FeatureMatrix(values=values, row_ids=self.row_ids.copy(), columns=list(self.columns),
                             labels={name: vector.copy() for name, vector in self.labels.items()})

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


class Scaler(BaseModel):
    """Per-feature mean and population standard deviation of the training partition."""

    model_config = ConfigDict(frozen=True)

    columns: List[str]
    mean: List[float]
    std: List[float]

    def index_of(self, column: str) -> int:
        return self.columns.index(column)

    def standardize_value(self, column: str, value: float) -> float:
        """Standardize a single raw value of ``column``."""
        i = self.index_of(column)
        return (value - self.mean[i]) / self.std[i]


class SplitManifest(BaseModel):
    """Audit artifact of one split: boundaries, scaler and intent threshold."""

    mode: str
    n_rows: int
    sizes: List[int]
    boundaries: Optional[List[int]] = None
    seed: Optional[int] = None
    scaler: Scaler
    label_columns: List[str]
    lifetime_threshold: Optional[float] = None
    standardized_threshold: Optional[float] = None
    percentile: Optional[float] = None
    class_balance: Dict[str, Dict[str, Dict[str, float]]] = {}
