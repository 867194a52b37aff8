"""Finite-difference validation of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    n_checked: int
    worst_index: tuple


def grad_check(fn, point, fd_step=1e-5, tolerance=1e-4, max_components=None,
               rng=None, denom_floor=1e-6):
    """Compare backward() against central finite differences at one point.

    fn maps a leaf Tensor to a scalar Tensor. Relative error per component is
    |analytic - fd| / max(|analytic|, |fd|, denom_floor); the report carries
    the worst one. max_components subsamples coordinates for large inputs.
    """
    point = np.asarray(point, dtype=np.float64)
    leaf = Tensor(point.copy(), requires_grad=True, op="gradcheck_leaf")
    out = fn(leaf)
    if out.data.size != 1:
        raise ValueError(f"grad_check target must be scalar, got shape {out.data.shape}")
    out.backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(point)

    flat_indices = np.arange(point.size)
    if max_components is not None and point.size > max_components:
        if rng is None:
            rng = np.random.default_rng(0)
        flat_indices = rng.choice(point.size, size=max_components, replace=False)
        flat_indices.sort()

    max_rel = 0.0
    worst = ()
    for flat in flat_indices:
        idx = np.unravel_index(flat, point.shape)
        xp = point.copy()
        xp[idx] += fd_step
        xm = point.copy()
        xm[idx] -= fd_step
        fp = float(fn(Tensor(xp, requires_grad=False, op="fd")).data)
        fm = float(fn(Tensor(xm, requires_grad=False, op="fd")).data)
        fd = (fp - fm) / (2.0 * fd_step)
        a = float(analytic[idx])
        rel = abs(a - fd) / max(abs(a), abs(fd), denom_floor)
        if rel > max_rel:
            max_rel = rel
            worst = idx
    return GradCheckReport(max_rel_error=max_rel, passed=max_rel < tolerance,
                           n_checked=len(flat_indices), worst_index=worst)
