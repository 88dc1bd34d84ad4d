"""Intent-conditioned violation detector.

The network has a behavior branch over the feature vector x and an intent
branch over the payload z; their embeddings are concatenated and mapped to
P(violation | x, z) by a sigmoid head. One network serves every intent.
"""
import logging
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from app.detectors.base import Detector
from app.exceptions import ConfigError, ShapeError
from app.models.flow import FeatureMatrix
from app.models.intent import ONE_HOT_ORDER, IntentSpec
from app.neural.checkpoint import net_payload
from app.neural.gradcheck import input_gradient
from app.neural.losses import bce_loss
from app.neural.network import DenseNet, build_net, forward
from app.neural.trainer import TrainingData, train


# Configure logging
logger = logging.getLogger(__name__)

BEHAVIOR_LAYERS = [(128, "relu"), (64, "relu"), (32, "relu")]
INTENT_LAYERS = [(16, "relu"), (16, "relu")]
FUSION_LAYERS = [(24, "relu"), (1, "sigmoid")]


def build_intact(behavior_dim: int, intent_dim: int, seed: int = 0, init: str = "he_uniform") -> DenseNet:
    """
    Two-branch network: x -> 128 -> 64 -> 32, z -> 16 -> 16, [32; 16] -> 24 -> 1.

    Args:
        behavior_dim: Feature width d
        intent_dim: Intent payload width k
        seed: Initialization seed
        init: ``he_uniform`` or ``zeros``

    Returns:
        The network (12,865 parameters for d=7, k=1)
    """
    if behavior_dim < 1 or intent_dim < 1:
        raise ShapeError("branch widths must be positive", expected=">= 1", actual=(behavior_dim, intent_dim))
    return build_net(
        {"x": behavior_dim, "z": intent_dim},
        {"x": BEHAVIOR_LAYERS, "z": INTENT_LAYERS},
        FUSION_LAYERS,
        seed=seed,
        init=init,
    )


def intact_score(net: DenseNet, x: np.ndarray, intent: IntentSpec) -> np.ndarray:
    """
    P(violation | x, z) for every row of ``x`` under one intent.

    Raises:
        ShapeError: If x or the payload width does not match the network
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError("x must be 2-D", expected=(None, net.input_dims["x"]), actual=x.shape)
    output, _ = forward(net, {"x": x, "z": intent.tile(x.shape[0])})
    return output[:, 0]


def expand_intents(x: np.ndarray, labels: Dict[str, np.ndarray],
                   intents: Sequence[IntentSpec]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    One (x, z, y) training tuple per row and intent, row-major.

    Args:
        x: Feature rows
        labels: Intent kind -> binary labels
        intents: Intents to expand over (equal payload widths)

    Returns:
        (x repeated, z payloads, y labels), each with len(x) * len(intents) rows
    """
    if len({intent.width for intent in intents}) != 1:
        raise ShapeError("intent payloads must share one width", actual=[intent.width for intent in intents])
    n, k = x.shape[0], len(intents)
    xs = np.repeat(np.asarray(x, dtype=np.float64), k, axis=0)
    zs = np.tile(np.array([intent.payload for intent in intents], dtype=np.float64), (n, 1))
    ys = np.stack([np.asarray(labels[intent.kind.value]) for intent in intents], axis=1).reshape(-1)
    return xs, zs, ys.astype(np.float64)


def expand_multi_intent(features: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Expand each trace into three tuples, one per intent, with one-hot z.

    Args:
        features: (n, d) trace features
        labels: (n, 3) flags in (reuse, downgrade, lifetime) order

    Returns:
        (x, z, y) with 3n rows
    """
    labels = np.asarray(labels).reshape(-1, len(ONE_HOT_ORDER))
    by_kind = {kind.value: labels[:, i] for i, kind in enumerate(ONE_HOT_ORDER)}
    return expand_intents(features, by_kind, [IntentSpec.one_hot(kind) for kind in ONE_HOT_ORDER])


def policy_sensitivity(net: DenseNet, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Analytic df/dz per row."""
    return input_gradient(net, {"x": x, "z": z}, "z")


def continuity_profile(net: DenseNet, x: np.ndarray, z: np.ndarray, direction: np.ndarray,
                       deltas: Sequence[float]) -> np.ndarray:
    """Largest |f(x, z + delta * direction) - f(x, z)| over the rows, per delta."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    base, _ = forward(net, {"x": x, "z": z})
    profile = []
    for delta in deltas:
        moved, _ = forward(net, {"x": x, "z": z + delta * np.asarray(direction, dtype=np.float64)})
        profile.append(float(np.max(np.abs(moved - base))))
    return np.asarray(profile)


class IntactDetector(Detector):
    """Conditional detector trained on (x, z, y) tuples of every intent."""

    kind = "intact"
    supervised = True

    def __init__(self, train_config=None):
        super().__init__(train_config)
        self.net: Optional[DenseNet] = None

    def _training_data(self, matrix: FeatureMatrix, intents: Sequence[IntentSpec]) -> TrainingData:
        for intent in intents:
            if intent.kind.value not in matrix.labels:
                raise ConfigError(f"feature matrix has no '{intent.kind.value}' labels",
                                  details={"available": sorted(matrix.labels)})
        xs, zs, ys = expand_intents(matrix.values, matrix.labels, intents)
        return TrainingData(inputs={"x": xs, "z": zs}, targets=ys.reshape(-1, 1), labels=ys)

    def fit(self, train_matrix: FeatureMatrix, val: Optional[FeatureMatrix],
            intents: Sequence[IntentSpec]) -> "IntactDetector":
        self.intents = {intent.kind.value: intent for intent in intents}
        self.n_features = train_matrix.n_features
        train_data = self._training_data(train_matrix, intents)
        val_data = self._training_data(val, intents) if val is not None and len(val) > 0 else None
        self.net = build_intact(train_matrix.n_features, intents[0].width, seed=self.train_config.seed)
        logger.info(f"intact: training on {len(train_data)} (x, z, y) tuples over {len(intents)} intents")
        self.net, history = train(self.net, train_data, val_data, self.train_config, bce_loss)
        self.history = history.to_dict()
        self.select_thresholds(val, intents)
        return self

    def score(self, x: np.ndarray, intent: IntentSpec) -> np.ndarray:
        return intact_score(self.net, self._check_features(x), intent)

    def _state(self) -> Dict[str, Any]:
        return net_payload(self.net)

    def _load_state(self, state: Dict[str, Any]) -> None:
        self.net = DenseNet.from_dict(state["network"])
