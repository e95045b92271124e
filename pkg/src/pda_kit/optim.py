"""Adam optimizer (bias-corrected, epsilon outside the square root)."""

from __future__ import annotations

import numpy as np

from .errors import NumericError
from .tensor import Tensor


class Adam:
    """One optimizer instance per network, so updates stay selective.

    Update (standard Adam):
        m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
        m_hat = m / (1-b1^t)          v_hat = v / (1-b2^t)
        p <- p - lr * m_hat / (sqrt(v_hat) + eps)
    """

    def __init__(
        self,
        named_params: list[tuple[str, Tensor]],
        lr: float = 2e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.names = [n for n, _ in named_params]
        self.params = [p for _, p in named_params]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p, m, v in zip(self.names, self.params, self.m, self.v):
            g = p.grad
            if not np.isfinite(g).all():
                raise NumericError(f"non-finite gradient in parameter {name}")
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
