"""Parameter updates: Adam (Kingma-Ba bias-corrected form), plain SGD,
and global-norm gradient clipping.

An optimizer owns a fixed list of parameters; moment buffers are allocated
lazily on the first step and always match their parameter's shape.  The
caller zeroes grads between steps (see :func:`autograd.zero_grads`).
"""

from __future__ import annotations

import numpy as np

from .autograd import GradientError, Tensor


class SGD:
    """Vanilla gradient descent: p <- p - lr * g."""

    kind = "sgd"

    def __init__(self, params: list[Tensor], lr: float):
        self.params = list(params)
        self.lr = float(lr)
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        for p in self.params:
            if p.grad is None:
                raise GradientError("sgd step with missing grad")
            p.data -= (self.lr * p.grad).astype(p.dtype, copy=False)


class Adam:
    """Adam with bias correction.

    m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """

    kind = "adam"

    def __init__(self, params: list[Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise GradientError("adam step with missing grad")
            m = self.m[i]
            v = self.v[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data -= update.astype(p.dtype, copy=False)


def clip_global_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all grads so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.  Grads must be populated; buffers are owned
    by the accumulation pass so in-place scaling is safe.
    """
    total = 0.0
    for p in params:
        if p.grad is None:
            raise GradientError("clip with missing grad")
        total += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            p.grad *= scale
    return norm
