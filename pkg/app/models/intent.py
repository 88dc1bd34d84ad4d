"""Declared security intents fed to the conditional detector."""
import enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict


class IntentKind(str, enum.Enum):
    """Violation dimension an intent prohibits."""
    REUSE = "reuse"
    DOWNGRADE = "downgrade"
    LIFETIME = "lifetime"


# One-hot position of each kind on the synthetic path.
ONE_HOT_ORDER: Tuple[IntentKind, ...] = (IntentKind.REUSE, IntentKind.DOWNGRADE, IntentKind.LIFETIME)


class IntentSpec(BaseModel):
    """Intent kind plus the numeric payload ``z`` given to the intent encoder."""

    model_config = ConfigDict(frozen=True)

    kind: IntentKind
    payload: Tuple[float, ...]

    @property
    def width(self) -> int:
        return len(self.payload)

    @classmethod
    def one_hot(cls, kind: IntentKind) -> "IntentSpec":
        """Synthetic-path encoding: 3-dim one-hot of the kind."""
        kind = IntentKind(kind)
        return cls(kind=kind, payload=tuple(1.0 if k is kind else 0.0 for k in ONE_HOT_ORDER))

    @classmethod
    def threshold(cls, standardized_value: float) -> "IntentSpec":
        """Flow-path encoding: the standardized lifetime threshold."""
        return cls(kind=IntentKind.LIFETIME, payload=(float(standardized_value),))

    def tile(self, n_rows: int) -> np.ndarray:
        """Payload replicated per row, shape ``(n_rows, width)``."""
        return np.tile(np.asarray(self.payload, dtype=np.float64), (n_rows, 1))
