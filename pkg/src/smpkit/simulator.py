"""Path simulation by chaining exact next-jump draws.

Paths in a batch are advanced in lockstep: each round, every live path draws
its next jump, grouped by current state so the hazard inversion runs as one
vectorized call per state.  Path ``k`` owns the substream
``substream(seed, k)`` and consumes exactly two uniforms per draw (jump time,
then destination), so a path is reproduced bit-for-bit whether it runs alone
or inside any batch.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ExplosionError
from .hazard_kernel import DEFAULT_QUADRATURE, QuadratureConfig, draw_destination, exponential_from_uniform, invert_hazard
from .rng import substream
from .state_model import IntensityModel

MAX_JUMPS = 10 ** 6
_BLOCK = 64  # uniforms fetched per refill; even, so draws never straddle a refill


@dataclass(frozen=True)
class PathQueryResult:
    state: int
    duration: float
    jumps: int


@dataclass(frozen=True)
class Trajectory:
    """One realized path: event times ``times[n-1] = T_n`` with marks ``states[n-1] = Y_n``.

    ``end`` is the last time the path is defined: the horizon when censored,
    otherwise the time of the final event (runs stopped after a fixed number
    of events).
    """

    y0: int
    s0: float
    u0: float
    horizon: float
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    censored: bool = True

    @property
    def n_events(self) -> int:
        return int(self.times.size)

    @property
    def end(self) -> float:
        if self.censored or self.times.size == 0:
            return self.horizon
        return float(self.times[-1])

    def _check(self, t):
        if not (self.s0 <= t <= self.end):
            raise DomainError(f"time {t} outside the simulated window [{self.s0}, {self.end}]")

    def state_at(self, t: float) -> PathQueryResult:
        self._check(t)
        n = int(np.searchsorted(self.times, t, side="right"))
        if n == 0:
            return PathQueryResult(self.y0, self.u0 + t - self.s0, 0)
        return PathQueryResult(int(self.states[n - 1]), t - float(self.times[n - 1]), n)

    def jump_count(self, a: float, b: float) -> int:
        """Number of events in (a, b]."""
        if a > b:
            raise DomainError("jump_count needs a <= b")
        self._check(a)
        self._check(b)
        return int(np.searchsorted(self.times, b, side="right") - np.searchsorted(self.times, a, side="right"))

    def pre_jump_durations(self) -> np.ndarray:
        """U_{T_n-} for every event: u0 + T_1 - s0 first, then the sojourns S_n."""
        if self.times.size == 0:
            return np.empty(0)
        prev = np.concatenate(([self.s0 - self.u0], self.times[:-1]))
        return self.times - prev


def state_at(traj: Trajectory, t: float) -> PathQueryResult:
    return traj.state_at(t)


def jump_count(traj: Trajectory, a: float, b: float) -> int:
    return traj.jump_count(a, b)


@dataclass(frozen=True)
class PathBatch:
    """Many paths sharing a start, stored as flat event arrays.

    Events of path k are ``times[offsets[k]:offsets[k+1]]`` (likewise ``states``).
    Path ids run from ``first_path`` upward.
    """

    y0: int
    s0: float
    u0: float
    horizon: float
    offsets: np.ndarray
    times: np.ndarray
    states: np.ndarray
    censored: np.ndarray
    first_path: int = 0

    def __len__(self):
        return self.offsets.size - 1

    @property
    def counts(self) -> np.ndarray:
        return np.diff(self.offsets)

    def trajectory(self, k: int) -> Trajectory:
        a, b = self.offsets[k], self.offsets[k + 1]
        return Trajectory(self.y0, self.s0, self.u0, self.horizon, self.times[a:b].copy(),
                          self.states[a:b].copy(), bool(self.censored[k]))

    def __iter__(self):
        return (self.trajectory(k) for k in range(len(self)))

    def path_index(self) -> np.ndarray:
        """Path position (0-based within the batch) of every flat event."""
        return np.repeat(np.arange(len(self)), self.counts)

    def _jumps_upto(self, t: float) -> np.ndarray:
        return np.bincount(self.path_index()[self.times <= t], minlength=len(self))

    def state_at(self, t: float):
        """Vectorized (Z_t, U_t, N_t) over all paths."""
        if t < self.s0 or (np.all(self.censored) and t > self.horizon):
            raise DomainError(f"time {t} outside the simulated window")
        n = self._jumps_upto(t)
        last = self.offsets[:-1] + n - 1
        has = n > 0
        safe = np.where(has, last, 0)
        if self.times.size:
            z = np.where(has, self.states[safe], self.y0)
            dur = np.where(has, t - self.times[safe], self.u0 + t - self.s0)
        else:
            z = np.full(len(self), self.y0)
            dur = np.full(len(self), self.u0 + t - self.s0)
        return z.astype(np.int64), dur.astype(float), n

    def jump_count(self, a: float, b: float) -> np.ndarray:
        if a > b:
            raise DomainError("jump_count needs a <= b")
        return self._jumps_upto(b) - self._jumps_upto(a)


class _UniformFeed:
    """Per-path buffered uniforms drawn from independent generators."""

    def __init__(self, gens, block=_BLOCK):
        self.gens = gens
        self.block = block
        self.buf = np.empty((len(gens), block))
        self.pos = np.full(len(gens), block)

    def pairs(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        need = idx[self.pos[idx] + 2 > self.block]
        for k in need:
            self.buf[k] = self.gens[k].random(self.block)
        self.pos[need] = 0
        p = self.pos[idx]
        a, b = self.buf[idx, p], self.buf[idx, p + 1]
        self.pos[idx] = p + 2
        return a, b


def _run(model: IntensityModel, y0: int, s0: float, u0: float, horizon: float, gens, max_jumps: int,
         stop_after: int | None, cfg: QuadratureConfig):
    n = len(gens)
    feed = _UniformFeed(gens)
    state = np.full(n, y0, dtype=np.int64)
    clock = np.full(n, float(s0))  # time of the last event (or start)
    age = np.full(n, float(u0))  # duration at ``clock``
    count = np.zeros(n, dtype=np.int64)
    live = np.ones(n, bool)
    censored = np.zeros(n, bool)
    ev_path, ev_time, ev_state = [], [], []

    while live.any():
        idx = np.flatnonzero(live)
        ue, ud = feed.pairs(idx)
        t_next = np.full(idx.size, np.inf)
        dest = np.full(idx.size, -1, dtype=np.int64)
        for i in np.unique(state[idx]):
            sel = np.flatnonzero(state[idx] == i)
            if model.is_absorbing(int(i)):
                continue
            p = idx[sel]
            tj = invert_hazard(model, int(i), clock[p], age[p], exponential_from_uniform(ue[sel]), horizon, cfg)
            jumped = np.isfinite(tj)
            if jumped.any():
                js = sel[jumped]
                dest[js] = draw_destination(model, int(i), tj[jumped], age[p[jumped]] + tj[jumped] - clock[p[jumped]],
                                            ud[js])
                t_next[js] = tj[jumped]
        jumped = np.isfinite(t_next)
        done = idx[~jumped]
        live[done] = False
        censored[done] = True
        j_idx = idx[jumped]
        if j_idx.size == 0:
            break
        over = count[j_idx] >= max_jumps
        if over.any():
            raise ExplosionError(f"path exceeded max_jumps={max_jumps} before the horizon {horizon}")
        ev_path.append(j_idx)
        ev_time.append(t_next[jumped])
        ev_state.append(dest[jumped])
        clock[j_idx] = t_next[jumped]
        age[j_idx] = 0.0
        state[j_idx] = dest[jumped]
        count[j_idx] += 1
        if stop_after is not None:
            live[j_idx[count[j_idx] >= stop_after]] = False

    if ev_path:
        path = np.concatenate(ev_path)
        times = np.concatenate(ev_time)
        marks = np.concatenate(ev_state)
        order = np.argsort(path, kind="stable")
        times, marks = times[order], marks[order]
    else:
        times, marks = np.empty(0), np.empty(0, dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(count)))
    return offsets, times, marks, censored


def _check_start(model, y0, s0, u0, horizon, max_jumps, stop_after):
    y0 = model.states.index(y0)
    if s0 < 0 or u0 < 0:
        raise DomainError("start time and initial duration must be nonnegative")
    if not horizon >= s0:
        raise DomainError("horizon must be >= the start time")
    if max_jumps < 1:
        raise DomainError("max_jumps must be >= 1")
    if math.isinf(horizon) and stop_after is None:
        raise DomainError("an infinite horizon needs stop_after")
    return y0


def simulate_batch(model: IntensityModel, y0, s0: float, u0: float, horizon: float, n_paths: int, seed: int,
                   first_path: int = 0, max_jumps: int = MAX_JUMPS, stop_after: int | None = None,
                   cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> PathBatch:
    """Simulate paths ``first_path .. first_path + n_paths - 1`` of the run seeded by ``seed``.

    ``stop_after`` ends a path after that many events (it is then not
    censored); useful for embedded-chain experiments on an infinite horizon.
    """
    y0 = _check_start(model, y0, s0, u0, horizon, max_jumps, stop_after)
    if n_paths < 0:
        raise DomainError("n_paths must be >= 0")
    gens = [substream(seed, k) for k in range(first_path, first_path + n_paths)]
    offsets, times, marks, cens = _run(model, y0, float(s0), float(u0), float(horizon), gens, max_jumps,
                                       stop_after, cfg)
    return PathBatch(y0, float(s0), float(u0), float(horizon), offsets, times, marks, cens, first_path)


def simulate_path(model: IntensityModel, y0, s0: float, u0: float, horizon: float, rng,
                  max_jumps: int = MAX_JUMPS, stop_after: int | None = None,
                  cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> Trajectory:
    """Simulate one path; ``rng`` is a numpy Generator or an integer seed (path 0 of that seed)."""
    y0 = _check_start(model, y0, s0, u0, horizon, max_jumps, stop_after)
    gen = substream(rng, 0) if isinstance(rng, (int, np.integer)) else rng
    offsets, times, marks, cens = _run(model, y0, float(s0), float(u0), float(horizon), [gen], max_jumps,
                                       stop_after, cfg)
    return Trajectory(y0, float(s0), float(u0), float(horizon), times, marks, bool(cens[0]))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_trajectories_csv(batch: PathBatch, path, labels=None) -> None:
    """One row for the start (event_index 0), one per event, then a censoring row (event_index -1)."""
    labels = labels or [str(k) for k in range(int(max(batch.states.max(initial=0), batch.y0)) + 1)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path_id", "event_index", "time", "state"])
        for k in range(len(batch)):
            pid = batch.first_path + k
            a, b = batch.offsets[k], batch.offsets[k + 1]
            w.writerow([pid, 0, _fmt(batch.s0), labels[batch.y0]])
            for n in range(a, b):
                w.writerow([pid, n - a + 1, _fmt(batch.times[n]), labels[batch.states[n]]])
            if batch.censored[k]:
                last = batch.states[b - 1] if b > a else batch.y0
                w.writerow([pid, -1, _fmt(batch.horizon), labels[last]])
