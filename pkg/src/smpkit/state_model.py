"""State spaces and intensity fields q_ij(t, u).

An :class:`IntensityModel` holds one :class:`IntensityField` per ordered pair
``(i, j)`` with ``i != j``.  The diagonal ``q_ii = -q_i`` is always derived from
the row sum and never stored.  Fields are evaluated with numpy broadcasting so
that the simulator and the forward solver can work on whole arrays at once.

Built-in fields know how to integrate themselves along a characteristic
``v -> (v, v + c)`` in closed form when that is possible; everything else falls
back to adaptive quadrature in :mod:`smpkit.hazard_kernel`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError


# ---------------------------------------------------------------------------
# one-dimensional factors
# ---------------------------------------------------------------------------


class Factor:
    """A nonnegative function of one variable x >= 0 (time or duration)."""

    step = False  # piecewise constant
    monotone = True

    def __call__(self, x):
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        return np.empty(0)

    def integral(self, x0, x1):
        """Integral over [x0, x1], or None if there is no closed form."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(Factor):
    value: float

    step = True

    def __call__(self, x):
        return np.full(np.shape(x), float(self.value))

    def integral(self, x0, x1):
        return self.value * (np.asarray(x1, float) - x0)

    def to_dict(self):
        return {"kind": "constant", "value": self.value}


@dataclass(frozen=True)
class Exponential(Factor):
    """a * exp(b * x)."""

    a: float
    b: float

    def __call__(self, x):
        return self.a * np.exp(self.b * np.asarray(x, float))

    def integral(self, x0, x1):
        x0 = np.asarray(x0, float)
        x1 = np.asarray(x1, float)
        if self.b == 0.0:
            return self.a * (x1 - x0)
        return self.a * np.exp(self.b * x0) * np.expm1(self.b * (x1 - x0)) / self.b

    def to_dict(self):
        return {"kind": "exponential", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class PowerLaw(Factor):
    """a * x**p with p >= 0."""

    a: float
    p: float

    def __post_init__(self):
        if not self.p >= 0:
            raise ValueError(f"PowerLaw exponent must be >= 0, got {self.p}")

    def __call__(self, x):
        return self.a * np.power(np.asarray(x, float), self.p)

    def integral(self, x0, x1):
        q = self.p + 1.0
        return self.a / q * (np.power(np.asarray(x1, float), q) - np.power(np.asarray(x0, float), q))

    def to_dict(self):
        return {"kind": "power", "a": self.a, "p": self.p}


@dataclass(frozen=True)
class PiecewiseConstant(Factor):
    """Right-continuous step function.

    ``values[0]`` applies on ``[0, breaks[0])``, ``values[k]`` on
    ``[breaks[k-1], breaks[k])`` and the last value from the last break on.
    At a break the value of the interval to its right is used.
    """

    breaks: tuple
    values: tuple

    step = True
    monotone = False

    def __post_init__(self):
        b = tuple(float(x) for x in self.breaks)
        v = tuple(float(x) for x in self.values)
        if len(v) != len(b) + 1:
            raise ValueError("PiecewiseConstant needs len(values) == len(breaks) + 1")
        if any(y <= x for x, y in zip(b, b[1:])):
            raise ValueError("PiecewiseConstant breaks must be strictly increasing")
        object.__setattr__(self, "breaks", b)
        object.__setattr__(self, "values", v)

    def __call__(self, x):
        k = np.searchsorted(np.asarray(self.breaks), np.asarray(x, float), side="right")
        return np.asarray(self.values)[k]

    def breakpoints(self):
        return np.asarray(self.breaks)

    def _cumulative(self, x):
        # integral from 0 to x
        b = np.asarray(self.breaks)
        v = np.asarray(self.values)
        x = np.asarray(x, float)
        edges = np.concatenate(([0.0], b))
        base = np.concatenate(([0.0], np.cumsum(v[:-1] * np.diff(edges))))
        k = np.searchsorted(b, x, side="right")
        return base[k] + v[k] * (x - edges[k])

    def integral(self, x0, x1):
        return self._cumulative(x1) - self._cumulative(x0)

    def to_dict(self):
        return {"kind": "piecewise", "breaks": list(self.breaks), "values": list(self.values)}


# ---------------------------------------------------------------------------
# two-dimensional fields q(t, u)
# ---------------------------------------------------------------------------


class IntensityField:
    """Base class for q_ij(t, u); subclasses broadcast over array arguments."""

    step = False
    builtin = True

    def __call__(self, t, u):
        raise NotImplementedError

    def time_breaks(self) -> np.ndarray:
        return np.empty(0)

    def duration_breaks(self) -> np.ndarray:
        return np.empty(0)

    def characteristic_integral(self, t0, t1, c):
        """Closed-form integral of v -> q(v, v + c) over [t0, t1], or None."""
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantField(IntensityField):
    rate: float

    step = True

    def __call__(self, t, u):
        return np.full(np.broadcast(np.asarray(t), np.asarray(u)).shape, float(self.rate))

    def characteristic_integral(self, t0, t1, c):
        return self.rate * (np.asarray(t1, float) - t0) + 0.0 * np.asarray(c, float)

    def to_dict(self):
        return {"kind": "constant", "rate": self.rate}


def _piece_points(t0, t1, candidates):
    """Sorted cut points of [t0, t1] per element.

    ``t0``, ``t1`` are 1-D of length n, each candidate array is (n, K).
    """
    lo, hi = t0[:, None], t1[:, None]
    pts = np.concatenate([lo, hi] + [np.clip(c, lo, hi) for c in candidates], axis=1)
    pts.sort(axis=1)
    return pts


@dataclass(frozen=True)
class ProductField(IntensityField):
    """q(t, u) = time(t) * duration(u)."""

    time: Factor
    duration: Factor

    def __post_init__(self):
        object.__setattr__(self, "step", self.time.step and self.duration.step)

    def __call__(self, t, u):
        return self.time(t) * self.duration(u)

    def time_breaks(self):
        return self.time.breakpoints()

    def duration_breaks(self):
        return self.duration.breakpoints()

    def characteristic_integral(self, t0, t1, c):
        f, g = self.time, self.duration
        t0 = np.asarray(t0, float)
        t1 = np.asarray(t1, float)
        c = np.asarray(c, float)
        if isinstance(f, Constant):
            gi = g.integral(t0 + c, t1 + c)
            return None if gi is None else f.value * gi
        if isinstance(g, Constant):
            fi = f.integral(t0, t1)
            return None if fi is None else g.value * fi + 0.0 * c
        if isinstance(f, Exponential) and isinstance(g, Exponential):
            coef = f.a * g.a * np.exp(g.b * c)
            rate = f.b + g.b
            if rate == 0.0:
                return coef * (t1 - t0)
            return coef * np.exp(rate * t0) * np.expm1(rate * (t1 - t0)) / rate
        if not (f.step or g.step):
            return None
        shape = np.broadcast(t0, t1, c).shape
        t0b, t1b, cb = (np.broadcast_to(x, shape).ravel() for x in (t0, t1, c))
        cands = []
        if f.step:
            cands.append(np.broadcast_to(f.breakpoints(), (t0b.size, f.breakpoints().size)))
        if g.step:
            cands.append(g.breakpoints()[None, :] - cb[:, None])
        pts = _piece_points(t0b, t1b, cands)
        a, b = pts[:, :-1], pts[:, 1:]
        mid = 0.5 * (a + b)
        cc = cb[:, None]
        if f.step and g.step:
            out = (f(mid) * g(mid + cc) * (b - a)).sum(axis=1)
        elif f.step:
            gi = g.integral(a + cc, b + cc)
            out = (f(mid) * gi).sum(axis=1)
        else:
            fi = f.integral(a, b)
            out = (fi * g(mid + cc)).sum(axis=1)
        return out.reshape(shape)

    def to_dict(self):
        return {"kind": "product", "time": self.time.to_dict(), "duration": self.duration.to_dict()}


@dataclass(frozen=True)
class TableField(IntensityField):
    """Right-continuous step interpolation of a (t, u) table.

    ``values[a, b]`` applies on ``[t_edges[a], t_edges[a+1]) x [u_edges[b], u_edges[b+1])``.
    The declared domain is the closed rectangle spanned by the edges; queries
    outside it raise :class:`DomainError` unless ``clamp`` is set, in which
    case the boundary cells extend outward.
    """

    t_edges: tuple
    u_edges: tuple
    values: tuple
    clamp: bool = False

    step = True

    def __post_init__(self):
        te = tuple(float(x) for x in self.t_edges)
        ue = tuple(float(x) for x in self.u_edges)
        vals = np.asarray(self.values, float)
        if len(te) < 2 or len(ue) < 2:
            raise ValueError("TableField needs at least two edges per axis")
        if vals.shape != (len(te) - 1, len(ue) - 1):
            raise ValueError(f"TableField values must have shape {(len(te) - 1, len(ue) - 1)}, got {vals.shape}")
        if np.any(np.diff(te) <= 0) or np.any(np.diff(ue) <= 0):
            raise ValueError("TableField edges must be strictly increasing")
        object.__setattr__(self, "t_edges", te)
        object.__setattr__(self, "u_edges", ue)
        object.__setattr__(self, "values", tuple(map(tuple, vals.tolist())))

    def _index(self, x, edges, axis):
        e = np.asarray(edges)
        x = np.asarray(x, float)
        if not self.clamp and (np.any(x < e[0]) or np.any(x > e[-1])):
            raise DomainError(f"table queried outside its {axis} range [{e[0]}, {e[-1]}]")
        k = np.searchsorted(e, x, side="right") - 1
        return np.clip(k, 0, e.size - 2)

    def __call__(self, t, u):
        t, u = np.broadcast_arrays(np.asarray(t, float), np.asarray(u, float))
        return np.asarray(self.values)[self._index(t, self.t_edges, "time"), self._index(u, self.u_edges, "duration")]

    def time_breaks(self):
        return np.asarray(self.t_edges)

    def duration_breaks(self):
        return np.asarray(self.u_edges)

    def characteristic_integral(self, t0, t1, c):
        shape = np.broadcast(np.asarray(t0), np.asarray(t1), np.asarray(c)).shape
        t0b, t1b, cb = (np.broadcast_to(np.asarray(x, float), shape).ravel() for x in (t0, t1, c))
        te = np.asarray(self.t_edges)
        ue = np.asarray(self.u_edges)
        pts = _piece_points(t0b, t1b, [np.broadcast_to(te, (t0b.size, te.size)), ue[None, :] - cb[:, None]])
        a, b = pts[:, :-1], pts[:, 1:]
        mid = 0.5 * (a + b)
        width = b - a
        # zero-width pieces may sit outside the table; only evaluate real pieces
        live = width > 0
        vals = np.zeros_like(mid)
        if live.any():
            vals[live] = self(mid[live], mid[live] + np.broadcast_to(cb[:, None], mid.shape)[live])
        return (vals * width).sum(axis=1).reshape(shape)

    def to_dict(self):
        return {
            "kind": "table",
            "t_edges": list(self.t_edges),
            "u_edges": list(self.u_edges),
            "values": [list(r) for r in self.values],
            "clamp": self.clamp,
        }


@dataclass(frozen=True)
class CallableField(IntensityField):
    """Black-box field wrapping a user function ``fn(t, u)``.

    Set ``vectorized=False`` for scalar-only functions; they are then mapped
    element by element, which is slow but correct.
    """

    fn: Callable
    vectorized: bool = True
    name: str = "callable"

    builtin = False

    def __call__(self, t, u):
        if self.vectorized:
            t, u = np.broadcast_arrays(np.asarray(t, float), np.asarray(u, float))
            return np.asarray(self.fn(t, u), float) + np.zeros(t.shape)
        return np.vectorize(lambda a, b: float(self.fn(a, b)), otypes=[float])(t, u)

    def to_dict(self):
        raise TypeError(f"callable field {self.name!r} has no serialized form")


def weibull_field(shape: float, scale: float = 1.0, time: Factor | None = None) -> ProductField:
    """Weibull duration hazard (shape/scale) * (u/scale)**(shape-1), optionally times a time factor."""
    if shape < 1:
        raise ValueError("weibull_field needs shape >= 1 so that the hazard is bounded on compacts")
    duration = PowerLaw(shape / scale**shape, shape - 1.0)
    return ProductField(time or Constant(1.0), duration)


# ---------------------------------------------------------------------------
# state space and model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if len(labels) < 2:
            raise ValueError("a state space needs at least two states")
        if len(set(labels)) != len(labels):
            raise ValueError(f"state labels must be distinct: {labels}")
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def index(self, state) -> int:
        if isinstance(state, (int, np.integer)) and not isinstance(state, bool):
            if not 0 <= state < self.size:
                raise DomainError(f"state index {state} out of range 0..{self.size - 1}")
            return int(state)
        try:
            return self.labels.index(str(state))
        except ValueError:
            raise DomainError(f"unknown state {state!r}") from None


@dataclass(frozen=True)
class IntensityModel:
    """Immutable collection of off-diagonal intensity fields over a finite state space."""

    states: StateSpace
    fields: Mapping = field(default_factory=dict)

    def __post_init__(self):
        fields = {}
        for (i, j), f in dict(self.fields).items():
            i, j = self.states.index(i), self.states.index(j)
            if i == j:
                raise ValueError("diagonal intensities are derived from row sums and cannot be supplied")
            if not isinstance(f, IntensityField):
                f = ConstantField(float(f))
            fields[(i, j)] = f
        object.__setattr__(self, "fields", MappingProxyType(dict(sorted(fields.items()))))
        rows = tuple(tuple((j, f) for (a, j), f in self.fields.items() if a == i) for i in range(self.size))
        object.__setattr__(self, "_rows", rows)

    @classmethod
    def from_entries(cls, labels: Sequence, entries: Mapping) -> "IntensityModel":
        return cls(StateSpace(tuple(labels)), entries)

    @property
    def size(self) -> int:
        return self.states.size

    def row(self, i: int):
        """Off-diagonal (j, field) pairs of row i."""
        return self._rows[i]

    def is_absorbing(self, i: int) -> bool:
        return not self._rows[i]

    def fields_iter(self) -> Iterable:
        return self.fields.items()

    # evaluation -----------------------------------------------------------

    def rate(self, i: int, j: int, t, u):
        if i == j:
            return -self.total_rate(i, t, u)
        f = self.fields.get((i, j))
        if f is None:
            return np.zeros(np.broadcast(np.asarray(t), np.asarray(u)).shape)
        return f(t, u)

    def total_rate(self, i: int, t, u):
        out = np.zeros(np.broadcast(np.asarray(t), np.asarray(u)).shape)
        for _, f in self._rows[i]:
            out = out + f(t, u)
        return out

    def exit_rates(self, i: int, t, u) -> np.ndarray:
        """Array of shape (size, *broadcast) holding q_ij(t, u), zero at j == i."""
        shape = np.broadcast(np.asarray(t), np.asarray(u)).shape
        out = np.zeros((self.size,) + shape)
        for j, f in self._rows[i]:
            out[j] = f(t, u)
        return out

    def rate_matrix(self, t: float, u: float) -> np.ndarray:
        Q = np.zeros((self.size, self.size))
        for (i, j), f in self.fields.items():
            Q[i, j] = float(f(t, u))
        Q[np.diag_indices(self.size)] = -Q.sum(axis=1)
        return Q

    def norm(self, t, u):
        """Pointwise sup-norm max_i q_i(t, u) of the rate matrix."""
        out = np.zeros(np.broadcast(np.asarray(t), np.asarray(u)).shape)
        for i in range(self.size):
            out = np.maximum(out, self.total_rate(i, t, u))
        return out

    def time_breaks(self) -> np.ndarray:
        parts = [f.time_breaks() for f in self.fields.values()]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def duration_breaks(self) -> np.ndarray:
        parts = [f.duration_breaks() for f in self.fields.values()]
        return np.unique(np.concatenate(parts)) if parts else np.empty(0)

    def to_dict(self) -> dict:
        labels = self.states.labels
        return {
            "states": list(labels),
            "intensities": [
                {"from": labels[i], "to": labels[j], "field": f.to_dict()} for (i, j), f in self.fields.items()
            ],
        }


def constant_model(matrix, labels: Sequence | None = None) -> IntensityModel:
    """Time- and duration-independent model from a rate matrix; the diagonal is ignored."""
    Q = np.asarray(matrix, float)
    n = Q.shape[0]
    labels = labels if labels is not None else [str(k) for k in range(n)]
    entries = {(i, j): ConstantField(Q[i, j]) for i in range(n) for j in range(n) if i != j and Q[i, j] != 0.0}
    return IntensityModel.from_entries(labels, entries)


def zero_model(n: int = 2) -> IntensityModel:
    return IntensityModel.from_entries([str(k) for k in range(n)], {})


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def _check_time_duration(t, u):
    if np.any(np.asarray(t) < 0) or np.any(np.asarray(u) < 0):
        raise DomainError(f"time and duration must be nonnegative (t={t}, u={u})")


def rate(model: IntensityModel, i, j, t, u):
    """q_ij(t, u) for i != j, and -q_i(t, u) on the diagonal."""
    _check_time_duration(t, u)
    i, j = model.states.index(i), model.states.index(j)
    out = model.rate(i, j, t, u)
    return float(out) if np.ndim(out) == 0 else out


def total_rate(model: IntensityModel, i, t, u):
    _check_time_duration(t, u)
    out = model.total_rate(model.states.index(i), t, u)
    return float(out) if np.ndim(out) == 0 else out


def _axis_grid(lo: float, hi: float, resolution: int, breaks: np.ndarray) -> np.ndarray:
    pts = np.linspace(lo, hi, resolution)
    inner = breaks[(breaks >= lo) & (breaks <= hi)]
    return np.unique(np.concatenate((pts, inner)))


def sup_norm(model: IntensityModel, t_range, u_range, resolution: int = 101) -> float:
    """Grid maximum of max_i q_i(t, u) over a box, breakpoints included.

    A lower bound on the true supremum in general.  For step fields, and for
    monotone factors, the grid contains every point where the maximum can be
    attained, so the value is exact.
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    (t0, t1), (u0, u1) = t_range, u_range
    if t1 < t0 or u1 < u0:
        raise ValueError("empty range")
    _check_time_duration(t0, u0)
    tg = _axis_grid(t0, t1, resolution, model.time_breaks())
    ug = _axis_grid(u0, u1, resolution, model.duration_breaks())
    T, U = np.meshgrid(tg, ug, indexing="ij")
    if not model.fields:
        return 0.0
    return float(np.max(model.norm(T, U)))


@dataclass(frozen=True)
class ValidationIssue:
    i: int
    j: int
    t: float
    u: float
    value: float
    kind: str  # "negative", "nan", "infinite", "error"


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    sup: float
    exact: bool
    issues: tuple = ()

    def __bool__(self):
        return self.passed


def _sup_is_exact(model: IntensityModel) -> bool:
    for i in range(model.size):
        row = model.row(i)
        if all(f.step for _, f in row):
            continue
        if len(row) == 1 and isinstance(row[0][1], ProductField):
            f = row[0][1]
            if f.time.monotone and f.duration.monotone:
                continue
        return False
    return True


def validate(model: IntensityModel, horizon: float, max_duration: float, resolution: int = 51,
             max_issues: int = 100) -> ValidationReport:
    """Evaluate every field on a grid over [0, horizon] x [0, max_duration] and report bad values."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    tg = _axis_grid(0.0, horizon, resolution, model.time_breaks())
    ug = _axis_grid(0.0, max(max_duration, 0.0), resolution, model.duration_breaks())
    T, U = np.meshgrid(tg, ug, indexing="ij")
    issues = []
    sup = 0.0
    rows = np.zeros((model.size,) + T.shape)
    for (i, j), f in model.fields.items():
        try:
            vals = np.asarray(f(T, U), float)
        except Exception as exc:  # noqa: BLE001 - any failure is a report entry
            issues.append(ValidationIssue(i, j, math.nan, math.nan, math.nan, f"error: {exc}"))
            continue
        bad = ~np.isfinite(vals) | (vals < 0)
        for a, b in zip(*np.nonzero(bad)):
            if len(issues) >= max_issues:
                break
            v = vals[a, b]
            kind = "nan" if np.isnan(v) else "infinite" if np.isinf(v) else "negative"
            issues.append(ValidationIssue(i, j, float(T[a, b]), float(U[a, b]), float(v), kind))
        rows[i] += np.where(bad, 0.0, vals)
    if model.fields:
        sup = float(rows.max())
    return ValidationReport(not issues, sup, _sup_is_exact(model), tuple(issues))
