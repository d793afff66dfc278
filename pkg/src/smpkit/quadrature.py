"""Vectorized adaptive Simpson quadrature.

Many independent integrals are refined together: every round halves the
intervals whose Richardson error estimate is still too large, so the work
is a handful of large numpy calls rather than a Python recursion per
integral.
"""
from __future__ import annotations

import numpy as np

from .errors import ToleranceError


def adaptive_simpson(f, a, b, tol: float = 1e-10, max_depth: int = 40, breaks=None) -> np.ndarray:
    """Integrate ``f`` over ``[a[k], b[k]]`` for every k.

    ``f(x, idx)`` evaluates the k-th integrand at points ``x`` where ``idx``
    holds the integral index for each point.  ``breaks`` is an optional
    ``(n, K)`` array of points where the integrand may be discontinuous or
    kinked; intervals are split there before refinement (NaN entries are
    ignored).  The absolute tolerance applies to each integral separately.

    Intervals still unresolved at ``max_depth`` (around a jump or an
    integrable singularity) are accepted when their summed error estimate is
    within ``tol``; otherwise :class:`ToleranceError` is raised.
    """
    a = np.atleast_1d(np.asarray(a, float))
    b = np.atleast_1d(np.asarray(b, float))
    a, b = np.broadcast_arrays(a, b)
    n = a.size
    a, b = a.ravel(), b.ravel()
    result = np.zeros(n)

    idx = np.arange(n)
    lo, hi = a.copy(), b.copy()
    eps = np.full(n, float(tol))
    if breaks is not None:
        br = np.asarray(breaks, float).reshape(n, -1)
        pts = np.concatenate([lo[:, None], hi[:, None], np.clip(np.nan_to_num(br, nan=-np.inf), lo[:, None], hi[:, None])],
                             axis=1)
        pts.sort(axis=1)
        k = pts.shape[1] - 1
        idx = np.repeat(np.arange(n), k)
        lo = pts[:, :-1].ravel()
        hi = pts[:, 1:].ravel()
        keep = hi > lo
        idx, lo, hi = idx[keep], lo[keep], hi[keep]
        eps = np.full(idx.size, float(tol)) / np.maximum(np.bincount(idx, minlength=n)[idx], 1)

    mid = 0.5 * (lo + hi)
    fa, fm, fb = f(lo, idx), f(mid, idx), f(hi, idx)
    whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    for depth in range(max_depth):
        if idx.size == 0:
            return result
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm, idx), f(rm, idx)
        left = (mid - lo) / 6.0 * (fa + 4.0 * flm + fm)
        right = (hi - mid) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        done = np.abs(delta) <= 15.0 * eps
        if depth == max_depth - 1:
            # at the depth limit, accept if the summed error estimate still meets tol per integral
            rest = np.bincount(idx[~done], np.abs(delta[~done]) / 15.0, minlength=n)
            if np.any(rest > tol):
                raise ToleranceError(f"adaptive Simpson did not reach tol={tol} within depth {max_depth}")
            done[:] = True
        if done.any():
            np.add.at(result, idx[done], (left + right + delta / 15.0)[done])
        if done.all():
            return result
        go = ~done
        idx = np.concatenate((idx[go], idx[go]))
        new_lo = np.concatenate((lo[go], mid[go]))
        new_hi = np.concatenate((mid[go], hi[go]))
        fa, fb = np.concatenate((fa[go], fm[go])), np.concatenate((fm[go], fb[go]))
        fm = np.concatenate((flm[go], frm[go]))
        whole = np.concatenate((left[go], right[go]))
        eps = np.concatenate((eps[go], eps[go])) * 0.5
        lo, hi = new_lo, new_hi
        mid = 0.5 * (lo + hi)
    return result
