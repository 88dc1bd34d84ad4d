"""Reconstruction-error detectors: nonlinear and linear autoencoders."""
import logging
from typing import Any, Dict, Literal, Optional

import numpy as np

from app.detectors.base import UnsupervisedDetector, require_normals
from app.models.run_config import TrainConfig
from app.neural.checkpoint import net_payload
from app.neural.losses import mse_loss
from app.neural.network import DenseNet, build_net, forward
from app.neural.trainer import TrainingData, train


# Configure logging
logger = logging.getLogger(__name__)

Variant = Literal["linear", "nonlinear"]


def build_autoencoder(d: int, variant: Variant, seed: int = 0, init: str = "he_uniform") -> DenseNet:
    """
    Autoencoder topology.

    ``nonlinear``: d -> 16 -> 8 -> 16 (ReLU) -> d (linear).
    ``linear``: d -> 4 -> d with no activations.
    """
    if variant == "nonlinear":
        head = [(16, "relu"), (8, "relu"), (16, "relu"), (d, "linear")]
    elif variant == "linear":
        head = [(4, "linear"), (d, "linear")]
    else:
        raise ValueError(f"Unknown autoencoder variant: {variant}")
    return build_net({"x": d}, {"x": []}, head, seed=seed, init=init)


def reconstruction_error(net: DenseNet, x: np.ndarray) -> np.ndarray:
    """Per-row mean squared reconstruction error."""
    x = np.asarray(x, dtype=np.float64)
    reconstruction, _ = forward(net, x)
    return np.mean((reconstruction - x) ** 2, axis=1)


class AutoencoderDetector(UnsupervisedDetector):
    """Scores rows by how badly an autoencoder trained on normals reconstructs them."""

    variant: Variant = "nonlinear"

    def __init__(self, train_config: Optional[TrainConfig] = None, contamination: float = 0.05):
        super().__init__(train_config, contamination)
        self.net: Optional[DenseNet] = None

    def fit_normals(self, x: np.ndarray, val_x: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None) -> "AutoencoderDetector":
        """
        Train on normal rows with the MSE objective.

        Raises:
            NormalsOnlyViolation: If ``labels`` holds a positive
            DivergedError: If training diverges
        """
        require_normals(self.kind, labels)
        x = np.asarray(x, dtype=np.float64)
        self.n_features = x.shape[1]
        self.net = build_autoencoder(x.shape[1], self.variant, seed=self.train_config.seed)
        val_data = None
        if val_x is not None and len(val_x) > 0:
            val_data = TrainingData(inputs={"x": val_x}, targets=val_x)
        self.net, history = train(self.net, TrainingData(inputs={"x": x}, targets=x), val_data,
                                  self.train_config, mse_loss)
        self.history = history.to_dict()
        self._set_contamination_threshold(x)
        return self

    def anomaly_score(self, x: np.ndarray) -> np.ndarray:
        return reconstruction_error(self.net, x)

    def _state(self) -> Dict[str, Any]:
        return {"variant": self.variant, **net_payload(self.net)}

    def _load_state(self, state: Dict[str, Any]) -> None:
        self.net = DenseNet.from_dict(state["network"])


class NonlinearAutoencoderDetector(AutoencoderDetector):
    kind = "ae_nonlinear"
    variant = "nonlinear"


class LinearAutoencoderDetector(AutoencoderDetector):
    kind = "ae_linear"
    variant = "linear"


def train_autoencoder(train_normals: np.ndarray, variant: Variant, config: Optional[TrainConfig] = None,
                      val_normals: Optional[np.ndarray] = None,
                      labels: Optional[np.ndarray] = None) -> AutoencoderDetector:
    """
    Train a linear or nonlinear autoencoder on normal rows.

    Args:
        train_normals: Normal training rows
        variant: ``linear`` or ``nonlinear``
        config: Training configuration
        val_normals: Normal validation rows for early stopping
        labels: Optional labels, all of which must be 0

    Returns:
        The trained detector
    """
    cls = LinearAutoencoderDetector if variant == "linear" else NonlinearAutoencoderDetector
    return cls(config).fit_normals(train_normals, val_normals, labels)


def ae_score(model: AutoencoderDetector, x: np.ndarray) -> np.ndarray:
    return model.anomaly_score(x)
