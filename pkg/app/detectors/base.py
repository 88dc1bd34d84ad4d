"""Common detector protocol, threshold selection and checkpoint envelope."""
import logging
from abc import ABC, abstractmethod
from typing import Any, ClassVar, Dict, Optional, Sequence, Union

import numpy as np

from app.exceptions import ConfigError, NormalsOnlyViolation, ShapeError
from app.metrics import select_threshold_max_f1
from app.models.flow import FeatureMatrix
from app.models.intent import IntentKind, IntentSpec
from app.models.run_config import TrainConfig


# Configure logging
logger = logging.getLogger(__name__)

SUPERVISED_FALLBACK_THRESHOLD = 0.5


def intent_key(intent: Union[IntentSpec, IntentKind, str]) -> str:
    if isinstance(intent, IntentSpec):
        return intent.kind.value
    return IntentKind(intent).value


def normal_rows(matrix: FeatureMatrix, intents: Sequence[IntentSpec]) -> np.ndarray:
    """Boolean mask of rows negative for every given intent."""
    mask = np.ones(len(matrix), dtype=bool)
    for intent in intents:
        labels = matrix.labels.get(intent.kind.value)
        if labels is None:
            raise ConfigError(f"feature matrix has no '{intent.kind.value}' labels",
                              details={"available": sorted(matrix.labels)})
        mask &= np.asarray(labels) == 0
    return mask


def require_normals(model_kind: str, labels: Optional[np.ndarray]) -> None:
    """
    Guard of the unsupervised trainers.

    Raises:
        NormalsOnlyViolation: If any label is positive
    """
    if labels is None:
        return
    n_positive = int(np.sum(np.asarray(labels) != 0))
    if n_positive:
        raise NormalsOnlyViolation(model_kind, n_positive)


class Detector(ABC):
    """A trained violation or anomaly scorer with one decision threshold per intent.

    Higher scores always mean more violating.
    """

    kind: ClassVar[str] = ""
    supervised: ClassVar[bool] = False

    def __init__(self, train_config: Optional[TrainConfig] = None):
        self.train_config = train_config or TrainConfig()
        self.intents: Dict[str, IntentSpec] = {}
        self.thresholds: Dict[str, float] = {}
        self.history: Dict[str, Any] = {}
        self.n_features: Optional[int] = None

    def __repr__(self) -> str:
        return f"<{type(self).__name__}(intents={sorted(self.intents)}, features={self.n_features})>"

    @abstractmethod
    def fit(self, train_matrix: FeatureMatrix, val: Optional[FeatureMatrix],
            intents: Sequence[IntentSpec]) -> "Detector":
        """Train on standardized features; labels are read per intent from the matrices."""

    @abstractmethod
    def score(self, x: np.ndarray, intent: IntentSpec) -> np.ndarray:
        """Violation scores of the rows of ``x`` under ``intent``."""

    def fallback_threshold(self, intent: IntentSpec) -> float:
        return SUPERVISED_FALLBACK_THRESHOLD

    def threshold_for(self, intent: Union[IntentSpec, IntentKind, str]) -> float:
        key = intent_key(intent)
        if key not in self.thresholds:
            raise ConfigError(f"{self.kind} has no threshold for intent '{key}'",
                              details={"available": sorted(self.thresholds)})
        return self.thresholds[key]

    def _check_features(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or (self.n_features is not None and x.shape[1] != self.n_features):
            raise ShapeError(f"{self.kind} expects {self.n_features} features",
                             expected=(None, self.n_features), actual=x.shape)
        return x

    def select_thresholds(self, val: Optional[FeatureMatrix], intents: Sequence[IntentSpec]) -> Dict[str, float]:
        """
        Pick each intent's threshold by maximum validation F1.

        Intents whose validation labels are missing or single-class fall back
        to :meth:`fallback_threshold`.
        """
        for intent in intents:
            key = intent.kind.value
            labels = None if val is None else val.labels.get(key)
            if labels is not None and 0 < int(np.sum(labels)) < len(labels):
                self.thresholds[key] = select_threshold_max_f1(self.score(val.values, intent), labels)
            else:
                self.thresholds[key] = self.fallback_threshold(intent)
                logger.warning(f"{self.kind}: single-class validation for '{key}', using fallback threshold")
        return self.thresholds

    # -- checkpoints -------------------------------------------------------

    @abstractmethod
    def _state(self) -> Dict[str, Any]:
        """Model-specific parameters."""

    @abstractmethod
    def _load_state(self, state: Dict[str, Any]) -> None:
        """Inverse of :meth:`_state`."""

    def to_checkpoint(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "train_config": self.train_config.model_dump(mode="json"),
            "intents": {key: spec.model_dump(mode="json") for key, spec in self.intents.items()},
            "thresholds": dict(self.thresholds),
            "history": self.history,
            "state": self._state(),
        }

    @classmethod
    def from_checkpoint(cls, data: Dict[str, Any]) -> "Detector":
        from app.detectors.registry import detector_class

        detector = detector_class(data["kind"])(TrainConfig(**data["train_config"]))
        detector.n_features = data["n_features"]
        detector.intents = {key: IntentSpec(**spec) for key, spec in data["intents"].items()}
        detector.thresholds = {key: float(value) for key, value in data["thresholds"].items()}
        detector.history = data.get("history", {})
        detector._load_state(data["state"])
        return detector


class UnsupervisedDetector(Detector):
    """Detector trained on normal rows only; scores ignore the intent."""

    def __init__(self, train_config: Optional[TrainConfig] = None, contamination: float = 0.05):
        super().__init__(train_config)
        self.contamination = contamination
        self.contamination_threshold: Optional[float] = None

    @abstractmethod
    def fit_normals(self, x: np.ndarray, val_x: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None) -> "UnsupervisedDetector":
        """Fit on normal rows; ``labels``, when given, must all be zero."""

    @abstractmethod
    def anomaly_score(self, x: np.ndarray) -> np.ndarray:
        """Intent-independent anomaly scores."""

    def score(self, x: np.ndarray, intent: Optional[IntentSpec] = None) -> np.ndarray:
        return self.anomaly_score(self._check_features(x))

    def fallback_threshold(self, intent: IntentSpec) -> float:
        return float(self.contamination_threshold)

    def fit(self, train_matrix: FeatureMatrix, val: Optional[FeatureMatrix],
            intents: Sequence[IntentSpec]) -> "UnsupervisedDetector":
        self.intents = {intent.kind.value: intent for intent in intents}
        self.n_features = train_matrix.n_features
        train_mask = normal_rows(train_matrix, intents)
        val_x = None
        if val is not None and len(val) > 0:
            val_x = val.values[normal_rows(val, intents)]
        logger.info(f"{self.kind}: fitting on {int(train_mask.sum())} normal rows of {len(train_matrix)}")
        self.fit_normals(train_matrix.values[train_mask], val_x)
        self.select_thresholds(val, intents)
        return self

    def _set_contamination_threshold(self, x: np.ndarray) -> None:
        self.contamination_threshold = float(
            np.percentile(self.anomaly_score(x), 100.0 * (1.0 - self.contamination))
        )

    def to_checkpoint(self) -> Dict[str, Any]:
        data = super().to_checkpoint()
        data["contamination"] = self.contamination
        data["contamination_threshold"] = self.contamination_threshold
        return data

    @classmethod
    def from_checkpoint(cls, data: Dict[str, Any]) -> "Detector":
        detector = super().from_checkpoint(data)
        detector.contamination = data.get("contamination", 0.05)
        detector.contamination_threshold = data.get("contamination_threshold")
        return detector
