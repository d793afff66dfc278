"""Next-jump hazards along a characteristic, and exact jump sampling.

Starting in state i at time s with duration u, the hazard of the next jump
at a later time v is q_i(v, u + v - s): calendar time and duration advance
together.  Everything here is built on :func:`row_hazard`, the integral of
that hazard, which is vectorized over arrays of starting points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EvaluationError
from .quadrature import adaptive_simpson
from .state_model import IntensityModel

TIME_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureConfig:
    tol: float = 1e-10
    max_depth: int = 40

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


DEFAULT_QUADRATURE = QuadratureConfig()


def field_hazard(fld, s, u, t, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Integral of v -> fld(v, u + v - s) over [s, t], elementwise."""
    s, u, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float), np.asarray(t, float))
    c = u - s
    out = fld.characteristic_integral(s, t, c)
    if out is not None:
        return np.broadcast_to(out, s.shape).astype(float)
    cf = c.ravel()
    vals = adaptive_simpson(lambda x, k: fld(x, x + cf[k]), s.ravel(), t.ravel(), cfg.tol, cfg.max_depth)
    return vals.reshape(s.shape)


def row_hazard(model: IntensityModel, i: int, s, u, t, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Cumulative hazard of leaving state i: sum over j of :func:`field_hazard`."""
    s, u, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(u, float), np.asarray(t, float))
    total = np.zeros(s.shape)
    for _, fld in model.row(i):
        total = total + field_hazard(fld, s, u, t, cfg)
    return total


def _check_args(s, u, t):
    if np.any(np.asarray(s) < 0) or np.any(np.asarray(u) < 0):
        raise DomainError("start time and duration must be nonnegative")
    if np.any(np.asarray(t) < np.asarray(s)):
        raise DomainError("evaluation time must not precede the clock start")


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def cumulative_hazard(model: IntensityModel, i, s, u, t, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Integral of q_i(v, u + v - s) dv over [s, t]."""
    _check_args(s, u, t)
    return _scalar(row_hazard(model, model.states.index(i), s, u, t, cfg))


def survival(model: IntensityModel, i, s, u, t, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Probability of no jump in (s, t] given state i and duration u at time s."""
    return _scalar(np.exp(-np.asarray(cumulative_hazard(model, i, s, u, t, cfg))))


def jump_density(model: IntensityModel, i, j, s, u, t, cfg: QuadratureConfig = DEFAULT_QUADRATURE):
    """Density of the next jump happening at t and landing in j."""
    i, j = model.states.index(i), model.states.index(j)
    if i == j:
        raise DomainError("jump_density needs i != j")
    _check_args(s, u, t)
    R = np.exp(-row_hazard(model, i, s, u, t, cfg))
    q = model.rate(i, j, t, np.asarray(u) + np.asarray(t) - np.asarray(s))
    return _scalar(q * R)


def invert_hazard(model: IntensityModel, i: int, s, u, target, horizon: float,
                  cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> np.ndarray:
    """Smallest t with cumulative hazard equal to ``target``; ``inf`` when beyond ``horizon``.

    Bracketing by doubling steps from s, then bisection to an absolute time
    tolerance of 1e-12.  Works with flat stretches of zero hazard.
    """
    s = np.atleast_1d(np.asarray(s, float)).copy()
    u = np.broadcast_to(np.asarray(u, float), s.shape).copy()
    target = np.broadcast_to(np.asarray(target, float), s.shape).copy()
    out = np.full(s.shape, np.inf)
    live = np.ones(s.shape, bool)
    if math.isfinite(horizon):
        live &= row_hazard(model, i, s, u, np.full(s.shape, horizon), cfg) >= target
    if not live.any():
        return out

    k = np.flatnonzero(live)
    ss, uu, ee = s[k], u[k], target[k]
    lo = ss.copy()
    span = horizon - ss if math.isfinite(horizon) else np.full(ss.shape, np.inf)
    step = np.minimum(1.0, span)
    hi = ss + step
    for _ in range(2100):
        below = row_hazard(model, i, ss, uu, hi, cfg) < ee
        if not below.any():
            break
        lo = np.where(below, hi, lo)
        step = np.where(below, 2.0 * step, step)
        hi = np.where(below, np.minimum(ss + step, horizon), hi)
        if not np.all(np.isfinite(hi)):
            raise EvaluationError("hazard bracket diverged; intensities vanish on an unbounded horizon")
    else:
        raise EvaluationError("failed to bracket the jump time")

    # bisection
    open_ = hi - lo > TIME_TOL
    while open_.any():
        a = np.flatnonzero(open_)
        mid = 0.5 * (lo[a] + hi[a])
        stuck = (mid <= lo[a]) | (mid >= hi[a])
        h = row_hazard(model, i, ss[a], uu[a], mid, cfg)
        up = h >= ee[a]
        hi[a] = np.where(up & ~stuck, mid, hi[a])
        lo[a] = np.where(~up & ~stuck, mid, lo[a])
        open_[a] = (hi[a] - lo[a] > TIME_TOL) & ~stuck
    out[k] = hi
    return out


def draw_destination(model: IntensityModel, i: int, t, dur, uniform) -> np.ndarray:
    """Destination states drawn with probabilities q_ij(t, dur) / q_i(t, dur)."""
    t = np.atleast_1d(np.asarray(t, float))
    dur = np.broadcast_to(np.asarray(dur, float), t.shape)
    uniform = np.broadcast_to(np.asarray(uniform, float), t.shape)
    rates = model.exit_rates(i, t, dur)  # (S, n)
    cum = np.cumsum(rates, axis=0)
    total = cum[-1]
    if np.any(~(total > 0)):
        raise EvaluationError(f"total exit rate of state {i} is zero (or NaN) at a sampled jump time")
    # first j with cum_j > U * total; never i because its rate is zero
    pick = (cum <= (uniform * total)[None, :]).sum(axis=0)
    return np.minimum(pick, model.size - 1)


@dataclass(frozen=True)
class JumpOutcome:
    time: float
    state: int | None
    censored: bool


def exponential_from_uniform(uniform):
    return -np.log1p(-np.asarray(uniform, float))


def sample_next_jump(model: IntensityModel, i, s: float, u: float, horizon: float, rng=None, *,
                     exponential: float | None = None, uniform: float | None = None,
                     cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> JumpOutcome:
    """Draw the next jump time and destination by inverting the cumulative hazard.

    Two uniforms are taken from ``rng`` per call (time, then destination);
    ``exponential`` and ``uniform`` override them for deterministic use.
    """
    i = model.states.index(i)
    if horizon < s:
        raise DomainError("horizon precedes the start time")
    _check_args(s, u, s)
    if exponential is None or uniform is None:
        if rng is None:
            raise ValueError("either rng or both forced draws are required")
        draws = rng.random(2)
        exponential = float(exponential_from_uniform(draws[0])) if exponential is None else exponential
        uniform = float(draws[1]) if uniform is None else uniform
    t_star = invert_hazard(model, i, [s], [u], [exponential], horizon, cfg)[0]
    if not math.isfinite(t_star):
        return JumpOutcome(horizon, None, True)
    j = int(draw_destination(model, i, [t_star], [u + t_star - s], [uniform])[0])
    return JumpOutcome(float(t_star), j, False)
