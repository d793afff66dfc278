"""Monte Carlo estimates of transition probabilities from simulated paths.

All estimators reduce a batch of paths to integer tallies wrapped in an
:class:`EstimatorSummary`.  Work is split into fixed-size chunks of path ids
that may run on worker threads; since path k always uses substream k and
tallies are integers, the merged result does not depend on chunking or
scheduling.
"""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import DomainError
from .hazard_kernel import DEFAULT_QUADRATURE, QuadratureConfig
from .rng import worker_count
from .simulator import MAX_JUMPS, PathBatch, simulate_batch
from .state_model import IntensityModel

CHUNK = 20000
WILSON_BELOW = 10


@dataclass(frozen=True)
class EstimatorSummary:
    """Bernoulli tallies: ``counts[c]`` of ``n`` paths hit cell ``keys[c]``."""

    n: int
    counts: np.ndarray
    keys: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.keys),):
            raise ValueError("one count per key is required")
        if self.n < 0 or np.any(counts < 0) or np.any(counts > self.n):
            raise ValueError("counts must lie in [0, n]")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "keys", tuple(self.keys))

    @property
    def estimate(self) -> np.ndarray:
        return self.counts / self.n if self.n else np.zeros(len(self.keys))

    @property
    def stderr(self) -> np.ndarray:
        p = self.estimate
        return np.sqrt(p * (1.0 - p) / self.n) if self.n else np.zeros(len(self.keys))

    def interval(self, alpha: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
        """Normal-approximation interval, Wilson score where a tally is below 10 on either side."""
        z = norm.ppf(1.0 - alpha / 2.0)
        p, se, n = self.estimate, self.stderr, max(self.n, 1)
        lo, hi = p - z * se, p + z * se
        small = np.minimum(self.counts, self.n - self.counts) < WILSON_BELOW
        if small.any():
            denom = 1.0 + z * z / n
            centre = (p + z * z / (2 * n)) / denom
            half = z * np.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
            lo = np.where(small, centre - half, lo)
            hi = np.where(small, centre + half, hi)
            lo = np.where(self.counts == 0, 0.0, lo)
            hi = np.where(self.counts == self.n, 1.0, hi)
        return np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)

    def __getitem__(self, key):
        c = self.keys.index(key)
        return float(self.estimate[c]), float(self.stderr[c])

    def merge(self, other: "EstimatorSummary") -> "EstimatorSummary":
        if self.keys != other.keys:
            raise ValueError("cannot merge summaries over different keys")
        return EstimatorSummary(self.n + other.n, self.counts + other.counts, self.keys)


def merge(a: EstimatorSummary, b: EstimatorSummary) -> EstimatorSummary:
    return a.merge(b)


def tally(model: IntensityModel, i, s: float, u: float, horizon: float, n_paths: int, seed: int, reduce, keys,
          first_path: int = 0, stop_after: int | None = None, chunk: int = CHUNK, max_jumps: int = MAX_JUMPS,
          cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> EstimatorSummary:
    """Simulate paths from (i, s, u) and tally ``reduce(batch) -> counts`` over chunks."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    keys = tuple(keys)
    starts = list(range(first_path, first_path + n_paths, chunk))

    def job(a):
        m = min(chunk, first_path + n_paths - a)
        batch = simulate_batch(model, i, s, u, horizon, m, seed, first_path=a, max_jumps=max_jumps,
                               stop_after=stop_after, cfg=cfg)
        return EstimatorSummary(m, reduce(batch), keys)

    workers = min(worker_count(), len(starts))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, starts))
    else:
        parts = [job(a) for a in starts]
    out = parts[0]
    for p in parts[1:]:
        out = out.merge(p)
    return out


def _check_times(s, u, t):
    if s < 0 or u < 0:
        raise DomainError("s and u must be nonnegative")
    if t < s:
        raise DomainError("t must be >= s")


def estimate_transition(model: IntensityModel, i, s: float, u: float, t: float, n_paths: int, seed: int,
                        **kw) -> EstimatorSummary:
    """Fractions of paths from (i, s, u) found in each state at t; keyed by state index."""
    _check_times(s, u, t)
    S = model.size

    def reduce(batch: PathBatch):
        z, _, _ = batch.state_at(t)
        return np.bincount(z, minlength=S)

    return tally(model, i, s, u, t, n_paths, seed, reduce, range(S), **kw)


def estimate_duration_cdfs(model: IntensityModel, i, s: float, u: float, t: float, d_grid, n_paths: int,
                           seed: int, **kw) -> dict:
    """p_ij(s, t, u, [0, d]) for every state j and grid point d, from one set of paths.

    Returns ``{j: EstimatorSummary keyed by d}``.
    """
    _check_times(s, u, t)
    d_grid = np.asarray(d_grid, float)
    if d_grid.ndim != 1 or np.any(np.diff(d_grid) < 0) or np.any(d_grid < 0):
        raise DomainError("d_grid must be a sorted list of nonnegative durations")
    S = model.size
    keys = [(j, float(d)) for j in range(S) for d in d_grid]

    def reduce(batch: PathBatch):
        z, dur, _ = batch.state_at(t)
        hit = dur[None, :] <= d_grid[:, None]  # closed interval [0, d]
        return np.concatenate([(hit & (z == j)[None, :]).sum(axis=1) for j in range(S)])

    full = tally(model, i, s, u, t, n_paths, seed, reduce, keys, **kw)
    m = d_grid.size
    return {j: EstimatorSummary(full.n, full.counts[j * m:(j + 1) * m], tuple(float(d) for d in d_grid))
            for j in range(S)}


def estimate_duration_cdf(model: IntensityModel, i, s: float, u: float, t: float, j, d_grid, n_paths: int,
                          seed: int, **kw) -> EstimatorSummary:
    return estimate_duration_cdfs(model, i, s, u, t, d_grid, n_paths, seed, **kw)[model.states.index(j)]


@dataclass(frozen=True)
class AtomEstimate:
    location: float
    mass: float
    stderr: float


def estimate_atom(model: IntensityModel, i, s: float, u: float, t: float, n_paths: int, seed: int,
                  **kw) -> AtomEstimate:
    """Mass at the no-jump duration u + t - s, as p(d) - p(d (1 - 1e-9))."""
    loc = u + t - s
    ii = model.states.index(i)
    below = loc * (1.0 - 1e-9)
    cdf = estimate_duration_cdfs(model, i, s, u, t, [below, loc], n_paths, seed, **kw)[ii]
    diff = int(cdf.counts[1] - cdf.counts[0])
    p = diff / cdf.n
    return AtomEstimate(loc, p, math.sqrt(p * (1 - p) / cdf.n))


def estimate_multijump(model: IntensityModel, i, u: float, t: float, h: float, n_paths: int, seed: int,
                       **kw) -> EstimatorSummary:
    """Probability of at least two events in (t, t+h] given Z_t = i, U_t = u; key ``">=2"``."""
    summ = estimate_multijump_sweep(model, i, u, t, [h], n_paths, seed, **kw)
    return EstimatorSummary(summ.n, summ.counts, (">=2",))


def estimate_multijump_sweep(model: IntensityModel, i, u: float, t: float, h_list, n_paths: int, seed: int,
                             **kw) -> EstimatorSummary:
    """Multi-jump probabilities for several windows from one set of paths; keyed by h.

    Windows share paths (each path is simulated once up to the longest),
    which is the same as estimating each h separately with the same seed.
    """
    h_arr = np.asarray(h_list, float)
    if h_arr.size == 0 or np.any(~(h_arr > 0)):
        raise DomainError("h must be positive")
    _check_times(t, u, t)

    def reduce(batch: PathBatch):
        # paths stop at their second event, so that event's time decides every window
        second = np.full(len(batch), np.inf)
        two = batch.counts >= 2
        second[two] = batch.times[batch.offsets[:-1][two] + 1]
        return (second[None, :] <= t + h_arr[:, None]).sum(axis=1)

    return tally(model, i, t, u, t + float(h_arr.max()), n_paths, seed, reduce, [float(h) for h in h_arr],
                 stop_after=2, **kw)


@dataclass(frozen=True)
class EstimateRow:
    i: str
    j: str
    s: float
    t: float
    u: float
    d_or_total: float | str
    estimate: float
    stderr: float
    n: int


def _fmt(x) -> str:
    return f"{x:.12g}" if isinstance(x, (float, np.floating)) else str(x)


def transition_rows(model, i, s, u, t, summary: EstimatorSummary) -> list:
    lab = model.states.labels
    est, se = summary.estimate, summary.stderr
    return [EstimateRow(lab[model.states.index(i)], lab[j], s, t, u, "total", float(est[c]), float(se[c]), summary.n)
            for c, j in enumerate(summary.keys)]


def cdf_rows(model, i, s, u, t, cdfs: dict) -> list:
    lab = model.states.labels
    out = []
    for j in sorted(cdfs):
        summ = cdfs[j]
        for c, d in enumerate(summ.keys):
            out.append(EstimateRow(lab[model.states.index(i)], lab[j], s, t, u, d, float(summ.estimate[c]),
                                   float(summ.stderr[c]), summ.n))
    return out


def write_estimates_csv(rows, path) -> None:
    cols = ["i", "j", "s", "t", "u", "d_or_total", "estimate", "stderr", "n"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in cols])
