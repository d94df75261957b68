"""Slow, independent reference computations used to check the fast paths.

Nothing here imports the autodiff ops; convolution and moments are written
as plain loops over Python floats.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


@dataclass
class OracleReport:
    op: str
    max_abs_error: float
    max_rel_error: float
    samples: int

    def __post_init__(self):
        if self.max_abs_error < 0 or self.max_rel_error < 0 or self.samples < 1:
            raise ValueError("oracle report needs non-negative errors and at least one sample")


def _reflect(i: int, n: int) -> int:
    if i < 0:
        return -i
    if i >= n:
        return 2 * n - 2 - i
    return i


def oracle_conv2d(x, weight, bias) -> np.ndarray:
    """Direct 3x3 reflect-padded convolution with seven nested loops."""
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    n, c, h, w = x.shape
    o = weight.shape[0]
    out = np.zeros((n, o, h, w))
    for b in range(n):
        for oc in range(o):
            for y in range(h):
                for xx in range(w):
                    acc = float(bias[oc])
                    for ic in range(c):
                        for dy in range(3):
                            for dx in range(3):
                                sy = _reflect(y + dy - 1, h)
                                sx = _reflect(xx + dx - 1, w)
                                acc += float(x[b, ic, sy, sx]) * float(weight[oc, ic, dy, dx])
                    out[b, oc, y, xx] = acc
    return out


def oracle_moments(x) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass per-(sample, channel) mean and population variance."""
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    mu = np.zeros((n, c))
    var = np.zeros((n, c))
    for b in range(n):
        for ch in range(c):
            vals = [float(v) for v in x[b, ch].ravel()]
            m = math.fsum(vals) / len(vals)
            mu[b, ch] = m
            var[b, ch] = math.fsum((v - m) ** 2 for v in vals) / len(vals)
    return mu, var


def finite_diff(loss_fn: Callable[[], float], params: Sequence[np.ndarray], step: float = 1e-5) -> list:
    """Central-difference gradient of ``loss_fn()`` w.r.t. each array in ``params``.

    The arrays are perturbed in place and restored.
    """
    grads = []
    for p in params:
        flat = p.reshape(-1)
        g = np.zeros(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            g[i] = (up - down) / (2.0 * step)
        grads.append(g.reshape(p.shape))
    return grads


def oracle_weighted_total(terms: dict, weights, anchors: int = 0) -> float:
    """Weighted loss total written out term by term from a breakdown's scalar terms."""
    wc, ws, wt, wr = weights.w_c, weights.w_s, weights.w_t, weights.w_r
    total = wc * terms["content"] + ws * terms["style"] + wt * terms["tv"]
    total += wc * terms["u_content"] + ws * terms["u_style"] + wt * terms["u_tv"] + wr * terms["reconstruct"]
    for i in range(anchors):
        total += wc * terms[f"a_content_{i}"] + ws * terms[f"a_style_{i}"] + wt * terms[f"a_tv_{i}"]
    return total


def compare(op: str, fast, slow) -> OracleReport:
    fast = np.asarray(fast, dtype=np.float64)
    slow = np.asarray(slow, dtype=np.float64)
    diff = np.abs(fast - slow)
    rel = diff / np.maximum(1e-8, np.abs(fast) + np.abs(slow))
    return OracleReport(op, float(diff.max(initial=0.0)), float(rel.max(initial=0.0)), int(fast.size))


def reports_to_csv(reports: Sequence[OracleReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["op", "max_abs_error", "max_rel_error", "samples"])
    for r in reports:
        writer.writerow([r.op, repr(r.max_abs_error), repr(r.max_rel_error), r.samples])
    return buf.getvalue()
