"""Vectorized enumeration of loop iteration domains."""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import numpy as np

from .ir import AffineExpr, Loop

__all__ = ["IterationCapError", "enumerate_domain", "domain_size", "affine_values", "env_cap"]


class IterationCapError(RuntimeError):
    pass


def env_cap(default: int) -> int:
    """``LOOPNORM_ITER_CAP`` when set, else ``default``."""
    env = os.environ.get("LOOPNORM_ITER_CAP")
    return int(env) if env else default


def affine_values(e: AffineExpr, pts: np.ndarray, cols: Mapping[str, int],
                  bindings: Mapping[str, int]) -> np.ndarray:
    out = np.full(pts.shape[0], e.const, dtype=np.int64)
    for name, c in e.terms:
        if name in cols:
            out += c * pts[:, cols[name]]
        else:
            out += c * int(bindings[name])
    return out


def _upper(loop: Loop, pts, cols, bindings) -> np.ndarray:
    hi = affine_values(loop.upper, pts, cols, bindings)
    if loop.upper_div != 1:
        hi = -((-hi) // loop.upper_div)
    for m in loop.upper_min:
        hi = np.minimum(hi, affine_values(m, pts, cols, bindings))
    return hi


def enumerate_domain(loops: Sequence[Loop], bindings: Mapping[str, int],
                     cap: int | None = None) -> np.ndarray:
    """Iteration vectors of a loop chain in execution (lexicographic) order.

    Returns an ``(n_points, len(loops))`` int64 array; column ``k`` holds the
    value of ``loops[k].iterator``.
    """
    pts = np.zeros((1, 0), dtype=np.int64)
    cols: dict[str, int] = {}
    for loop in loops:
        lo = affine_values(loop.lower, pts, cols, bindings)
        hi = _upper(loop, pts, cols, bindings)
        cnt = np.maximum(hi - lo, 0)
        total = int(cnt.sum())
        if cap is not None and total > cap:
            raise IterationCapError(f"iteration space exceeds cap of {cap}")
        rep = np.repeat(np.arange(pts.shape[0]), cnt)
        starts = np.repeat(np.cumsum(cnt) - cnt, cnt)
        vals = lo[rep] + (np.arange(total, dtype=np.int64) - starts)
        pts = np.column_stack([pts[rep], vals]) if pts.shape[1] else vals[:, None]
        cols[loop.iterator] = len(cols)
    return pts


def domain_size(loops: Sequence[Loop], bindings: Mapping[str, int], cap: int | None = None) -> int:
    if not loops:
        return 1
    return int(enumerate_domain(loops, bindings, cap).shape[0])
