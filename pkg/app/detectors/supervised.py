"""Supervised feed-forward baseline, one network per intent."""
import logging
from typing import Any, Dict, Optional, Sequence

import numpy as np

from app.detectors.base import Detector
from app.exceptions import ConfigError
from app.models.flow import FeatureMatrix
from app.models.intent import IntentSpec
from app.neural.checkpoint import net_payload
from app.neural.losses import bce_loss
from app.neural.network import DenseNet, build_net, forward
from app.neural.trainer import TrainingData, train


# Configure logging
logger = logging.getLogger(__name__)


def build_supervised(d: int, seed: int = 0, init: str = "he_uniform") -> DenseNet:
    """Stack d -> 64 -> 32 -> 16 (ReLU) -> 1 (sigmoid)."""
    return build_net(
        {"x": d},
        {"x": []},
        [(64, "relu"), (32, "relu"), (16, "relu"), (1, "sigmoid")],
        seed=seed,
        init=init,
    )


class SupervisedDetector(Detector):
    """Binary classifier per intent trained with cross-entropy on full labels."""

    kind = "supervised"
    supervised = True

    def __init__(self, train_config=None):
        super().__init__(train_config)
        self.nets: Dict[str, DenseNet] = {}

    def fit(self, train_matrix: FeatureMatrix, val: Optional[FeatureMatrix],
            intents: Sequence[IntentSpec]) -> "SupervisedDetector":
        self.intents = {intent.kind.value: intent for intent in intents}
        self.n_features = train_matrix.n_features
        for offset, intent in enumerate(intents):
            key = intent.kind.value
            if key not in train_matrix.labels:
                raise ConfigError(f"feature matrix has no '{key}' labels", details={"available": sorted(train_matrix.labels)})
            y = np.asarray(train_matrix.labels[key], dtype=np.float64)
            train_data = TrainingData(inputs={"x": train_matrix.values}, targets=y.reshape(-1, 1), labels=y)
            val_data = None
            if val is not None and len(val) > 0:
                val_y = np.asarray(val.labels[key], dtype=np.float64)
                val_data = TrainingData(inputs={"x": val.values}, targets=val_y.reshape(-1, 1), labels=val_y)
            net = build_supervised(train_matrix.n_features, seed=self.train_config.seed + offset)
            logger.info(f"supervised: training the '{key}' network on {len(train_data)} rows")
            self.nets[key], history = train(net, train_data, val_data, self.train_config, bce_loss)
            self.history[key] = history.to_dict()
        self.select_thresholds(val, intents)
        return self

    def score(self, x: np.ndarray, intent: IntentSpec) -> np.ndarray:
        key = intent.kind.value
        if key not in self.nets:
            raise ConfigError(f"supervised model has no network for intent '{key}'",
                              details={"available": sorted(self.nets)})
        output, _ = forward(self.nets[key], self._check_features(x))
        return output[:, 0]

    def _state(self) -> Dict[str, Any]:
        return {key: net_payload(net) for key, net in self.nets.items()}

    def _load_state(self, state: Dict[str, Any]) -> None:
        self.nets = {key: DenseNet.from_dict(payload["network"]) for key, payload in state.items()}
