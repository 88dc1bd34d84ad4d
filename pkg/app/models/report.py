"""Evaluation report model."""
from typing import Optional

from pydantic import BaseModel, model_validator


class EvalReport(BaseModel):
    """Threshold-free and threshold-dependent metrics of one scored subset.

    ``defined`` is false when the subset holds a single class; AUROC and AUPRC
    are then ``None`` while the confusion counts are still filled.
    """

    auroc: Optional[float] = None
    auprc: Optional[float] = None
    f1: float = 0.0
    precision: float = 0.0
    recall: float = 0.0
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_pos: int
    n_neg: int
    defined: bool

    @model_validator(mode="after")
    def _check_consistency(self) -> "EvalReport":
        if self.tp + self.fn != self.n_pos or self.fp + self.tn != self.n_neg:
            raise ValueError("confusion counts do not add up to class sizes")
        if self.defined != (self.n_pos > 0 and self.n_neg > 0):
            raise ValueError("defined must be true exactly when both classes are present")
        if self.defined:
            for name in ("auroc", "auprc"):
                value = getattr(self, name)
                if value is None or not 0.0 <= value <= 1.0:
                    raise ValueError(f"{name} must lie in [0, 1] for a defined report")
        return self
