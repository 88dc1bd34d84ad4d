"""Deep SVDD: bias-free embedding network and a fixed hypersphere center."""
import logging
from typing import Any, Dict, Optional

import numpy as np

from app.detectors.base import UnsupervisedDetector, require_normals
from app.exceptions import CollapseError
from app.models.run_config import TrainConfig
from app.neural.checkpoint import net_payload
from app.neural.losses import center_distance_loss
from app.neural.network import DenseNet, build_net, forward
from app.neural.trainer import TrainingData, train


# Configure logging
logger = logging.getLogger(__name__)

COLLAPSE_VARIANCE = 1e-12
CENTER_EPS = 0.01


def build_svdd_net(d: int, seed: int = 0) -> DenseNet:
    """Embedding network d -> 32 (ReLU) -> 16 (linear), no bias terms."""
    return build_net({"x": d}, {"x": []}, [(32, "relu"), (16, "linear")], seed=seed, use_bias=False)


def initial_center(embeddings: np.ndarray, eps: float = CENTER_EPS) -> np.ndarray:
    """Mean embedding with near-zero coordinates pushed to +/- eps."""
    center = embeddings.mean(axis=0)
    center[(np.abs(center) < eps) & (center < 0)] = -eps
    center[(np.abs(center) < eps) & (center >= 0)] = eps
    return center


class DeepSvddDetector(UnsupervisedDetector):
    """One-class detector scoring the squared distance of the embedding to the center."""

    kind = "deep_svdd"

    def __init__(self, train_config: Optional[TrainConfig] = None, contamination: float = 0.05):
        super().__init__(train_config, contamination)
        self.net: Optional[DenseNet] = None
        self.center: Optional[np.ndarray] = None

    def embed(self, x: np.ndarray) -> np.ndarray:
        return forward(self.net, np.asarray(x, dtype=np.float64))[0]

    def fit_normals(self, x: np.ndarray, val_x: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None) -> "DeepSvddDetector":
        """
        Fix the center from the initial embeddings, then shrink the sphere.

        Raises:
            NormalsOnlyViolation: If ``labels`` holds a positive
            CollapseError: If the trained embedding has (near) zero variance
        """
        require_normals(self.kind, labels)
        x = np.asarray(x, dtype=np.float64)
        self.n_features = x.shape[1]
        self.net = build_svdd_net(x.shape[1], seed=self.train_config.seed)
        self.center = initial_center(self.embed(x))

        targets = np.tile(self.center, (x.shape[0], 1))
        val_data = None
        if val_x is not None and len(val_x) > 0:
            val_data = TrainingData(inputs={"x": val_x}, targets=np.tile(self.center, (len(val_x), 1)))
        self.net, history = train(self.net, TrainingData(inputs={"x": x}, targets=targets), val_data,
                                  self.train_config, center_distance_loss)
        self.history = history.to_dict()

        variance = float(np.mean(np.var(self.embed(x), axis=0)))
        if variance < COLLAPSE_VARIANCE:
            raise CollapseError(variance)
        self._set_contamination_threshold(x)
        return self

    def anomaly_score(self, x: np.ndarray) -> np.ndarray:
        diff = self.embed(x) - self.center
        return np.sum(diff * diff, axis=1)

    def _state(self) -> Dict[str, Any]:
        return {"center": self.center.tolist(), **net_payload(self.net)}

    def _load_state(self, state: Dict[str, Any]) -> None:
        self.net = DenseNet.from_dict(state["network"])
        self.center = np.asarray(state["center"], dtype=np.float64)


def train_deep_svdd(train_normals: np.ndarray, config: Optional[TrainConfig] = None,
                    val_normals: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None) -> DeepSvddDetector:
    """Train Deep SVDD on normal rows (20 epochs by default)."""
    return DeepSvddDetector(config).fit_normals(train_normals, val_normals, labels)


def svdd_score(model: DeepSvddDetector, x: np.ndarray) -> np.ndarray:
    return model.anomaly_score(x)
