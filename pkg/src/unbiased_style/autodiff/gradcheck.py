"""Central finite-difference check of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    step: float = 1e-5,
    tolerance: float | None = None,
) -> float:
    """Return the max relative error between backward() and central differences.

    ``fn`` must build a fresh scalar graph from ``inputs`` on every call. The
    relative error of one coordinate is ``|a - n| / max(1e-8, |a| + |n|)``.
    When ``tolerance`` is given an AssertionError is raised if it is exceeded.
    """
    for t in inputs:
        t.grad = None
    fn(*inputs).backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    worst = 0.0
    for t, a in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        a = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = fn(*inputs).item()
            flat[i] = orig - step
            down = fn(*inputs).item()
            flat[i] = orig
            num = (up - down) / (2.0 * step)
            err = abs(a[i] - num) / max(1e-8, abs(a[i]) + abs(num))
            worst = max(worst, err)
    if tolerance is not None and worst > tolerance:
        raise AssertionError(f"gradient check failed: max relative error {worst:.3e} > {tolerance:.1e}")
    return worst
