"""Isolation forest built from random axis-parallel partitions."""
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.special import digamma

from app.config import settings
from app.detectors.base import UnsupervisedDetector, require_normals
from app.exceptions import ConfigError
from app.models.run_config import IsolationForestConfig, TrainConfig


# Configure logging
logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
LEAF = -1


def average_path_length(n) -> np.ndarray:
    """c(n) = 2 H(n - 1) - 2 (n - 1) / n, with c(n) = 0 for n <= 1."""
    n = np.asarray(n, dtype=np.float64)
    flat = np.atleast_1d(n)
    result = np.zeros_like(flat)
    mask = flat > 1
    m = flat[mask]
    # H(k) = digamma(k + 1) + gamma
    result[mask] = 2.0 * (digamma(m) + EULER_GAMMA) - 2.0 * (m - 1.0) / m
    return result.reshape(n.shape)


@dataclass
class IsolationTree:
    """Node arrays of one tree; leaves have ``feature == -1`` and keep their sample size."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray

    def path_length(self, x: np.ndarray) -> np.ndarray:
        """Depth of each row's leaf plus c(leaf size)."""
        node = np.zeros(x.shape[0], dtype=np.int64)
        depth = np.zeros(x.shape[0], dtype=np.float64)
        rows = np.arange(x.shape[0])
        active = self.feature[node] != LEAF
        while np.any(active):
            idx = rows[active]
            current = node[idx]
            go_left = x[idx, self.feature[current]] < self.threshold[current]
            node[idx] = np.where(go_left, self.left[current], self.right[current])
            depth[idx] += 1.0
            active = self.feature[node] != LEAF
        return depth + average_path_length(self.size[node])

    def to_dict(self) -> Dict[str, List]:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "size": self.size.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, List]) -> "IsolationTree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int64),
            threshold=np.asarray(data["threshold"], dtype=np.float64),
            left=np.asarray(data["left"], dtype=np.int64),
            right=np.asarray(data["right"], dtype=np.int64),
            size=np.asarray(data["size"], dtype=np.int64),
        )


def grow_tree(x: np.ndarray, max_depth: int, rng: np.random.Generator) -> IsolationTree:
    """
    Grow one isolation tree on a subsample.

    Each split picks a random non-constant feature and a uniform split value
    between its node minimum and maximum; nodes stop at one row, at the depth
    cap or when every feature is constant.
    """
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    size: List[int] = []

    def new_node(n_rows: int) -> int:
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        size.append(n_rows)
        return len(feature) - 1

    stack = [(new_node(x.shape[0]), np.arange(x.shape[0]), 0)]
    while stack:
        node, index, depth = stack.pop()
        if depth >= max_depth or index.size <= 1:
            continue
        subset = x[index]
        low, high = subset.min(axis=0), subset.max(axis=0)
        candidates = np.nonzero(high > low)[0]
        if candidates.size == 0:
            continue
        split_feature = int(candidates[rng.integers(candidates.size)])
        split_value = float(rng.uniform(low[split_feature], high[split_feature]))
        goes_left = subset[:, split_feature] < split_value
        left_child = new_node(int(goes_left.sum()))
        right_child = new_node(int((~goes_left).sum()))
        feature[node], threshold[node] = split_feature, split_value
        left[node], right[node] = left_child, right_child
        stack.append((right_child, index[~goes_left], depth + 1))
        stack.append((left_child, index[goes_left], depth + 1))

    return IsolationTree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        size=np.asarray(size, dtype=np.int64),
    )


class IsolationForestDetector(UnsupervisedDetector):
    """Ensemble of isolation trees scoring s(x) = 2 ** (-E[h(x)] / c(psi))."""

    kind = "iforest"

    def __init__(self, train_config: Optional[TrainConfig] = None,
                 config: Optional[IsolationForestConfig] = None):
        config = config or IsolationForestConfig()
        super().__init__(train_config, contamination=config.contamination)
        self.config = config
        self.subsample: Optional[int] = None
        self.trees: List[IsolationTree] = []

    def fit_normals(self, x: np.ndarray, val_x: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None) -> "IsolationForestDetector":
        """
        Fit the forest on normal rows.

        Raises:
            ConfigError: If the subsample size is below 2 or fewer than 2 rows are given
            NormalsOnlyViolation: If ``labels`` holds a positive
        """
        require_normals(self.kind, labels)
        x = np.asarray(x, dtype=np.float64)
        psi = self.config.subsample
        if psi < 2:
            raise ConfigError(f"isolation forest subsample must be >= 2, got {psi}", details={"subsample": psi})
        if x.shape[0] < 2:
            raise ConfigError(f"isolation forest needs at least 2 rows, got {x.shape[0]}")
        if psi > x.shape[0]:
            logger.warning(f"Clamping isolation forest subsample {psi} to {x.shape[0]} rows")
            psi = x.shape[0]
        self.n_features = x.shape[1] if self.n_features is None else self.n_features
        self.subsample = psi
        max_depth = int(math.ceil(math.log2(psi)))
        self.trees = []
        for tree_index in range(self.config.n_trees):
            rng = np.random.default_rng(np.random.SeedSequence([self.train_config.seed, tree_index]))
            sample = x[rng.choice(x.shape[0], size=psi, replace=False)]
            self.trees.append(grow_tree(sample, max_depth, rng))
        self._set_contamination_threshold(x)
        logger.info(f"Fitted {len(self.trees)} isolation trees (psi={psi}, depth cap {max_depth})")
        return self

    def expected_path_length(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return np.mean([tree.path_length(x) for tree in self.trees], axis=0)

    def anomaly_score(self, x: np.ndarray) -> np.ndarray:
        normalizer = float(average_path_length(self.subsample))
        return np.power(2.0, -self.expected_path_length(x) / normalizer)

    def _state(self) -> Dict[str, Any]:
        return {
            "config": self.config.model_dump(mode="json"),
            "subsample": self.subsample,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    def _load_state(self, state: Dict[str, Any]) -> None:
        self.config = IsolationForestConfig(**state["config"])
        self.subsample = state["subsample"]
        self.trees = [IsolationTree.from_dict(tree) for tree in state["trees"]]


def fit_isolation_forest(train_normals: np.ndarray, n_trees: Optional[int] = None, subsample: Optional[int] = None,
                         seed: int = 0, labels: Optional[np.ndarray] = None) -> IsolationForestDetector:
    """
    Fit an isolation forest on normal rows.

    Args:
        train_normals: Normal training rows
        n_trees: Number of trees (default from settings)
        subsample: Subsample size psi (default from settings)
        seed: Forest seed
        labels: Optional labels, all of which must be 0

    Returns:
        The fitted detector
    """
    config = IsolationForestConfig(
        n_trees=settings.iforest_trees if n_trees is None else n_trees,
        subsample=settings.iforest_subsample if subsample is None else subsample,
    )
    detector = IsolationForestDetector(TrainConfig(seed=seed), config)
    return detector.fit_normals(train_normals, labels=labels)


def iforest_score(model: IsolationForestDetector, x: np.ndarray) -> np.ndarray:
    return model.anomaly_score(x)
