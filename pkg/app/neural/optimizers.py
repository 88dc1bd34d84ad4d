"""Gradient-descent optimizers updating DenseNet parameters in place."""
from typing import List, Optional, Tuple

import numpy as np

from app.exceptions import ConfigError, ShapeError
from app.neural.network import DenseNet


class SGD:
    """Plain stochastic gradient descent."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, net: DenseNet, grads: List[np.ndarray]) -> None:
        params = net.parameters()
        if len(params) != len(grads):
            raise ShapeError("gradient count does not match parameters", expected=len(params), actual=len(grads))
        for param, grad in zip(params, grads):
            param -= self.learning_rate * grad
        net.touch()


class Adam:
    """Adam with bias-corrected first and second moment estimates."""

    def __init__(self, learning_rate: float = 1e-3, betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self._m: Optional[List[np.ndarray]] = None
        self._v: Optional[List[np.ndarray]] = None

    def step(self, net: DenseNet, grads: List[np.ndarray]) -> None:
        params = net.parameters()
        if len(params) != len(grads):
            raise ShapeError("gradient count does not match parameters", expected=len(params), actual=len(grads))
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for param, grad, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        net.touch()


def make_optimizer(name: str, learning_rate: float, betas: Tuple[float, float] = (0.9, 0.999)):
    """
    Build an optimizer by name.

    Raises:
        ConfigError: If the name is unknown
    """
    if name == "sgd":
        return SGD(learning_rate)
    if name == "adam":
        return Adam(learning_rate, betas)
    raise ConfigError(f"Unknown optimizer: {name}", details={"optimizer": name})
