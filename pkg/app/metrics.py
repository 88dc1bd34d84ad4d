"""Threshold-free and threshold-dependent evaluation metrics."""
import logging
from pathlib import Path
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from sklearn.metrics import auc, precision_recall_curve, roc_curve as sk_roc_curve

from app.exceptions import ShapeError, UndefinedMetric
from app.models.report import EvalReport


# Configure logging
logger = logging.getLogger(__name__)


class PRCurve(NamedTuple):
    """Precision and recall at every distinct score threshold, thresholds descending."""
    precision: np.ndarray
    recall: np.ndarray
    thresholds: np.ndarray


def _prepare(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(np.int64)
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels differ in length", expected=labels.shape, actual=scores.shape)
    return scores, labels


def _require_both(metric: str, labels: np.ndarray) -> None:
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric(metric, n_pos, n_neg)


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    ROC curve with equal scores grouped into one step.

    Returns:
        (fpr, tpr, thresholds), thresholds descending

    Raises:
        UndefinedMetric: If only one class is present
    """
    scores, labels = _prepare(scores, labels)
    _require_both("ROC", labels)
    fpr, tpr, thresholds = sk_roc_curve(labels, scores, drop_intermediate=False)
    return fpr, tpr, thresholds


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """
    Area under the ROC curve by trapezoidal integration.

    Equals P(score+ > score-) + P(tie) / 2.

    Raises:
        UndefinedMetric: If only one class is present
    """
    fpr, tpr, _ = roc_curve(scores, labels)
    return float(np.clip(auc(fpr, tpr), 0.0, 1.0))


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> PRCurve:
    """
    Precision-recall points at every distinct score, thresholds descending.

    Raises:
        UndefinedMetric: If there is no positive
    """
    scores, labels = _prepare(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetric("PR curve", n_pos, int(labels.size))
    precision, recall, thresholds = precision_recall_curve(labels, scores)
    # Drop the (recall 0, precision 1) anchor and reverse to descending thresholds.
    return PRCurve(precision=precision[:-1][::-1], recall=recall[:-1][::-1], thresholds=thresholds[::-1])


def auprc(curve: PRCurve) -> float:
    """Step-wise (right-continuous) area: sum of recall increments times precision."""
    recall = np.concatenate([[0.0], curve.recall])
    return float(np.clip(np.sum(np.diff(recall) * curve.precision), 0.0, 1.0))


def _threshold_counts(scores: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """True and false positive counts when alerting on score >= each distinct score (descending)."""
    order = np.argsort(-scores, kind="mergesort")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    last_of_group = np.r_[np.nonzero(np.diff(sorted_scores))[0], sorted_scores.size - 1]
    tps = np.cumsum(sorted_labels)[last_of_group]
    fps = (last_of_group + 1) - tps
    return sorted_scores[last_of_group], tps, fps


def select_threshold_max_f1(val_scores: Sequence[float], val_labels: Sequence[int]) -> float:
    """
    Distinct validation score maximizing F1 when alerting on score >= threshold.

    Ties go to the higher threshold (fewer alerts).

    Raises:
        UndefinedMetric: If validation holds a single class
    """
    scores, labels = _prepare(val_scores, val_labels)
    _require_both("F1 threshold", labels)
    thresholds, tps, fps = _threshold_counts(scores, labels)
    n_pos = int(labels.sum())
    f1 = 2.0 * tps / (tps + fps + n_pos)
    return float(thresholds[int(np.argmax(f1))])


def evaluate(scores: Sequence[float], labels: Sequence[int], threshold: float) -> EvalReport:
    """
    Evaluate scores against labels at a fixed threshold.

    A single-class subset yields ``defined=False`` with confusion counts filled.

    Raises:
        ShapeError: If lengths differ
    """
    scores, labels = _prepare(scores, labels)
    predicted = scores >= threshold
    positive = labels == 1
    tp = int(np.sum(predicted & positive))
    fp = int(np.sum(predicted & ~positive))
    fn = int(np.sum(~predicted & positive))
    tn = int(np.sum(~predicted & ~positive))
    n_pos, n_neg = tp + fn, fp + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / n_pos if n_pos else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    defined = n_pos > 0 and n_neg > 0
    return EvalReport(
        auroc=auroc(scores, labels) if defined else None,
        auprc=auprc(pr_curve(scores, labels)) if defined else None,
        f1=f1,
        precision=precision,
        recall=recall,
        threshold=float(threshold),
        tp=tp, fp=fp, tn=tn, fn=fn,
        n_pos=n_pos, n_neg=n_neg,
        defined=defined,
    )


def write_curve_csv(path: Union[str, Path], x: Sequence[float], y: Sequence[float],
                    names: Tuple[str, str]) -> Path:
    """Two-column curve export for external plotting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame({names[0]: np.asarray(x, dtype=np.float64), names[1]: np.asarray(y, dtype=np.float64)}).to_csv(
        path, index=False, lineterminator="\n"
    )
    return path
