"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def finite_difference_check(f, x: Tensor, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f maps x to a scalar Tensor. Error per coordinate is
    |analytic - numeric| / max(1, |numeric|); the max over coordinates is
    returned. x is restored to its original values.
    """
    x.grad = None
    loss = f(x)
    if loss.size != 1:
        raise ValueError(f"finite_difference_check needs a scalar f, got shape {loss.shape}")
    loss.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    worst = 0.0
    flat = x.data.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up = f(x).data.item()
        flat[i] = keep - step
        down = f(x).data.item()
        flat[i] = keep
        numeric = (up - down) / (2.0 * step)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst


def finite_difference_check_many(loss_fn, tensors, step: float = 1e-5) -> float:
    """Like finite_difference_check but for a loss closed over several tensors.

    loss_fn takes no arguments; each tensor in `tensors` is perturbed in place.
    Returns the max relative error across all coordinates of all tensors.
    """
    tensors = list(tensors)
    for t in tensors:
        t.grad = None
    loss = loss_fn()
    if loss.size != 1:
        raise ValueError(f"finite_difference_check_many needs a scalar loss, got {loss.shape}")
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            up = loss_fn().data.item()
            flat[i] = keep - step
            down = loss_fn().data.item()
            flat[i] = keep
            numeric = (up - down) / (2.0 * step)
            err = abs(a_flat[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
