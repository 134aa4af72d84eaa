"""Adam with bias correction, updating Tensor parameters in place."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """Moment buffers for one parameter plus the shared step counter."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0


class Adam:
    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.states = [
            AdamState(np.zeros_like(p.data), np.zeros_like(p.data)) for p in self.params
        ]
        self.step_count = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        """One update. Parameters with grad=None are treated as zero-gradient."""
        self.step_count += 1
        t = self.step_count
        for p, state in zip(self.params, self.states):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            if grad.shape != p.data.shape:
                raise ShapeError(
                    f"adam: gradient shape {grad.shape} != parameter shape {p.data.shape}"
                )
            state.first_moment = self.beta1 * state.first_moment + (1.0 - self.beta1) * grad
            state.second_moment = self.beta2 * state.second_moment + (1.0 - self.beta2) * grad * grad
            state.step_count = t
            m_hat = state.first_moment / (1.0 - self.beta1 ** t)
            v_hat = state.second_moment / (1.0 - self.beta2 ** t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(params, grads, states, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Functional single step on raw arrays; states are mutated in place."""
    for p, grad, state in zip(params, grads, states):
        if grad.shape != p.data.shape:
            raise ShapeError(
                f"adam: gradient shape {grad.shape} != parameter shape {p.data.shape}"
            )
        t = state.step_count + 1
        state.step_count = t
        state.first_moment = beta1 * state.first_moment + (1.0 - beta1) * grad
        state.second_moment = beta2 * state.second_moment + (1.0 - beta2) * grad * grad
        m_hat = state.first_moment / (1.0 - beta1 ** t)
        v_hat = state.second_moment / (1.0 - beta2 ** t)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
