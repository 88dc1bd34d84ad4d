"""Losses returning (value, gradient with respect to the prediction)."""
from typing import Tuple

import numpy as np

from app.exceptions import ShapeError


EPSILON = 1e-7


def _check(pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if target.shape != pred.shape:
        if target.size == pred.size:
            target = target.reshape(pred.shape)
        else:
            raise ShapeError("prediction and target shapes differ", expected=pred.shape, actual=target.shape)
    return pred, target


def bce_loss(pred: np.ndarray, y: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean binary cross-entropy with predictions clipped to [eps, 1 - eps].

    Args:
        pred: Predicted probabilities
        y: Binary targets

    Returns:
        (loss, dLoss/dpred)
    """
    pred, y = _check(pred, y)
    clipped = np.clip(pred, EPSILON, 1.0 - EPSILON)
    loss = -np.mean(y * np.log(clipped) + (1.0 - y) * np.log(1.0 - clipped)) if pred.size else 0.0
    grad = (clipped - y) / (clipped * (1.0 - clipped)) / max(pred.size, 1)
    # Clipping is flat outside the band.
    grad = np.where((pred < EPSILON) | (pred > 1.0 - EPSILON), 0.0, grad)
    return float(loss), grad


def mse_loss(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean squared error over all elements (equal to the batch mean of per-row MSE).

    Returns:
        (loss, dLoss/dpred)
    """
    pred, target = _check(pred, target)
    diff = pred - target
    size = max(diff.size, 1)
    return float(np.sum(diff * diff) / size), 2.0 * diff / size


def center_distance_loss(pred: np.ndarray, center: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Mean squared Euclidean distance of embeddings to a fixed center.

    Returns:
        (loss, dLoss/dpred)
    """
    pred = np.asarray(pred, dtype=np.float64)
    diff = pred - np.asarray(center, dtype=np.float64)
    n = max(pred.shape[0], 1)
    return float(np.sum(diff * diff) / n), 2.0 * diff / n
