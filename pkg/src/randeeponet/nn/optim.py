"""First-order optimizers acting in place on a flat parameter vector."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NonFiniteError, ShapeError


@dataclass
class Optimizer:
    """Plain gradient descent (``sgd``) or bias-corrected Adam (``adam``).

    ``m``/``v`` are allocated on the first step and always match ``theta``.
    """

    algorithm: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.algorithm not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.algorithm!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        """Update ``theta`` in place and return it."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != theta.shape:
            raise ShapeError(f"gradient shape {grad.shape} != parameter shape {theta.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"non-finite gradient at optimizer step {self.step_count + 1}")
        self.step_count += 1
        if self.algorithm == "sgd":
            theta -= self.lr * grad
            return theta
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.step_count)
        v_hat = self.v / (1 - self.beta2 ** self.step_count)
        theta -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return theta
