"""Executable checks of the quantitative properties of semi-Markov intensities.

Each ``check_*`` function returns :class:`CheckReport` objects; none raise on
a failed property.  Solver-based quantities are used for derivatives and
residuals, Monte Carlo only for event probabilities.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import chi2_contingency, ks_2samp

from .errors import DomainError
from .forward_solver import RowSolution, duration_left_derivative, solve_row, transition_prob
from .hazard_kernel import DEFAULT_QUADRATURE, QuadratureConfig
from .monte_carlo import estimate_multijump_sweep, tally
from .quadrature import adaptive_simpson
from .rng import substream
from .simulator import simulate_batch
from .state_model import IntensityModel


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one check: ``passed`` iff ``computed`` meets ``target``; ``margin`` > 0 means room to spare."""

    name: str
    inputs: dict
    computed: float
    target: float
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "inputs": _jsonable(self.inputs), "computed": _jsonable(self.computed),
                "target": _jsonable(self.target), "passed": bool(self.passed), "margin": _jsonable(self.margin),
                "details": _jsonable(self.details)}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def _at_most(name, inputs, computed, bound, details=None) -> CheckReport:
    return CheckReport(name, inputs, float(computed), float(bound), bool(computed <= bound), float(bound - computed),
                       details or {})


# ---------------------------------------------------------------------------
# two jumps in a short window
# ---------------------------------------------------------------------------


def two_jump_bound(model: IntensityModel, i, t: float, u: float, h: float,
                   cfg: QuadratureConfig = QuadratureConfig(tol=1e-9)) -> float:
    """Double integral over t <= s <= v <= t+h of |Q(s, u+s-t)| |Q(v, v-s)|.

    |Q| is the pointwise row-sum norm max_i q_i.  Bounds the probability of
    two or more events in (t, t+h] given Z_t = i, U_t = u.
    """
    model.states.index(i)
    if not h > 0:
        raise DomainError("h must be positive")
    end = t + h

    def outer(s, _):
        inner = adaptive_simpson(lambda v, k: model.norm(v, v - s[k]), s, np.full(s.shape, end), cfg.tol,
                                 cfg.max_depth)
        return model.norm(s, u + s - t) * inner

    return float(adaptive_simpson(outer, [t], [end], cfg.tol, cfg.max_depth)[0])


def check_two_jump(model: IntensityModel, i, t: float, u: float, h_list, n_paths: int, seed: int,
                   cfg: QuadratureConfig = QuadratureConfig(tol=1e-9)) -> list:
    """Empirical P(>= 2 events in (t, t+h]) against the bound, and p/h nonincreasing as h shrinks.

    The same seed is used for every h, so the estimates are coupled path by path.
    """
    h_list = [float(h) for h in h_list]
    if any(h <= 0 for h in h_list) or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h_list must be positive and strictly decreasing")
    est = estimate_multijump_sweep(model, i, u, t, h_list, n_paths, seed)
    reports, prev = [], None
    for h in h_list:
        p, se = est[h]
        bound = two_jump_bound(model, i, t, u, h, cfg)
        inp = {"i": i, "t": t, "u": u, "h": h, "n_paths": n_paths}
        reports.append(_at_most("two_jump_bound", inp, p, bound + 3 * se,
                                {"estimate": p, "stderr": se, "bound": bound}))
        if prev is not None:
            ph, seh, hp = prev
            slack = 3 * math.hypot(se / h, seh / hp)
            reports.append(_at_most("two_jump_rate", {**inp, "previous_h": hp}, p / h, ph / hp + slack,
                                    {"ratio": p / h, "previous_ratio": ph / hp, "slack": slack}))
        prev = (p, se, h)
    return reports


# ---------------------------------------------------------------------------
# difference quotients (P(t, t+h, u) - I) / h
# ---------------------------------------------------------------------------


def _quotient_rows(model, t, u, h_list, dt, cfg):
    """quot[k, i, j] = (p_ij(t, t+h_k, u) - delta_ij) / h_k from one solve per start state."""
    h_list = np.asarray(h_list, float)
    S = model.size
    quot = np.zeros((h_list.size, S, S))
    t_end = t + float(h_list.max())
    for i in range(S):
        sol = solve_row(model, i, t, u, t_end, dt, output_times=list(t + h_list), cfg=cfg)
        for k, h in enumerate(h_list):
            row = sol.at(t + h)
            quot[k, i] = (row.marginals - (np.arange(S) == i)) / h
    return quot


def difference_quotient(model: IntensityModel, i, j, t: float, u: float, h: float, dt: float | None = None,
                        method: str = "solver", n_paths: int = 100000, seed: int = 0,
                        cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """(p_ij(t, t+h, u) - delta_ij) / h from the forward solver or from Monte Carlo."""
    i, j = model.states.index(i), model.states.index(j)
    if not h > 0:
        raise DomainError("h must be positive")
    if method == "solver":
        dt = dt if dt is not None else h / 256
        p = transition_prob(solve_row(model, i, t, u, t + h, dt, cfg=cfg).final, j)
    elif method == "mc":
        summ = tally(model, i, t, u, t + h, n_paths, seed,
                     lambda b: np.array([int(np.count_nonzero(b.state_at(t + h)[0] == j))]), [j])
        p = float(summ.estimate[0])
    else:
        raise ValueError("method must be 'solver' or 'mc'")
    return (p - (i == j)) / h


def quotient_sweep(model: IntensityModel, t: float, u: float, h_list, dt: float,
                   cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> tuple[np.ndarray, np.ndarray]:
    """Quotient matrices for every h and the max-entry error against Q(t, u)."""
    quot = _quotient_rows(model, t, u, h_list, dt, cfg)
    err = np.abs(quot - model.rate_matrix(t, u)[None]).max(axis=(1, 2))
    return quot, err


def fitted_order(h_list, errors) -> float:
    """Least-squares slope of log error against log h."""
    h, e = np.asarray(h_list, float), np.asarray(errors, float)
    if np.all(e == 0):
        return math.inf
    return float(np.polyfit(np.log(h), np.log(np.maximum(e, 1e-300)), 1)[0])


def check_derivative_limit(model: IntensityModel, t: float, u: float, h_list, dt: float, min_order: float = 0.9,
                           final_tol: float = 2e-2, cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> list:
    """Quotients approach Q(t, u) along the sweep: fitted order and final error."""
    h_list = [float(h) for h in h_list]
    _, err = quotient_sweep(model, t, u, h_list, dt, cfg)
    order = fitted_order(h_list, err)
    inp = {"t": t, "u": u, "h_list": h_list, "dt": dt}
    det = {"errors": err.tolist()}
    exact = bool(np.all(err == 0))
    return [
        CheckReport("derivative_limit_order", inp, order, min_order, exact or order >= min_order,
                    (order - min_order) if not exact else math.inf, det),
        _at_most("derivative_limit_error", inp, float(err[-1]), final_tol, det),
    ]


# ---------------------------------------------------------------------------
# dominating constant
# ---------------------------------------------------------------------------


def dominating_bound(model: IntensityModel, t: float, u: float, resolution: int = 201) -> float:
    """2 sup_{t<=s<=t+1} |Q(s, u+s-t)| (1 + sup_{t<=s<=v<=t+1} |Q(v, v-s)|), suprema over grids."""
    s = np.linspace(t, t + 1.0, resolution)
    line = float(model.norm(s, u + s - t).max())
    # durations v - s on the triangle range over [0, v - t]
    V, D = np.meshgrid(s, s - t, indexing="ij")
    keep = D <= V - t + 1e-12
    tri = float(model.norm(V[keep], D[keep]).max())
    tb, db = model.time_breaks(), model.duration_breaks()
    if tb.size or db.size:
        # step fields: include break points so the suprema are exact
        tb = tb[(tb >= t) & (tb <= t + 1)]
        extra_s = np.unique(np.concatenate((tb, t + db[(db >= u) & (db <= u + 1)] - u)))
        if extra_s.size:
            line = max(line, float(model.norm(extra_s, u + extra_s - t).max()))
        vv = np.unique(np.concatenate((s, tb)))
        dd = np.unique(np.concatenate((s - t, db[(db >= 0) & (db <= 1)])))
        V, D = np.meshgrid(vv, dd, indexing="ij")
        keep = D <= V - t + 1e-12
        tri = max(tri, float(model.norm(V[keep], D[keep]).max()))
    return 2.0 * line * (1.0 + tri)


def check_dominating_bound(model: IntensityModel, t: float, u: float, h_list=None, dt: float = 1e-3,
                           cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CheckReport:
    """Every row sum of |quotients| for h in (0, 1] stays below the dominating constant."""
    h_list = [k / 20 for k in range(1, 21)] if h_list is None else [float(h) for h in h_list]
    C = dominating_bound(model, t, u)
    quot = _quotient_rows(model, t, u, h_list, dt, cfg)
    sums = np.abs(quot).sum(axis=2)  # (h, i)
    worst = float(sums.max())
    return _at_most("dominating_bound", {"t": t, "u": u, "h_list": h_list, "dt": dt}, worst, C,
                    {"row_sums": sums.tolist(), "C": C})


# ---------------------------------------------------------------------------
# quick cycles
# ---------------------------------------------------------------------------


def quick_cycle_ratio(model: IntensityModel, i, t: float, u: float, h: float, n_paths: int, seed: int) -> tuple:
    """P(Z_{t+h} = i, U_{t+h} < u + h | Z_t = i, U_t = u) / h and its standard error.

    U_{t+h} < u + h on {Z_{t+h} = i} exactly when some event happened, which
    is how the event is counted.
    """
    ii = model.states.index(i)
    if not h > 0:
        raise DomainError("h must be positive")

    def reduce(batch):
        z, _, n = batch.state_at(t + h)
        return np.array([int(np.count_nonzero((z == ii) & (n >= 1)))])

    summ = tally(model, ii, t, u, t + h, n_paths, seed, reduce, ["cycle"])
    p, se = summ["cycle"]
    return p / h, se / h


def check_quick_cycle(model: IntensityModel, i, t: float, u: float, h_list, n_paths: int, seed: int,
                      cfg: QuadratureConfig = QuadratureConfig(tol=1e-9)) -> list:
    """Ratio below the two-jump bound over h, and nonincreasing along the sweep within 3 SE."""
    h_list = [float(h) for h in h_list]
    if any(h <= 0 for h in h_list) or any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise DomainError("h_list must be positive and strictly decreasing")
    reports, prev = [], None
    for h in h_list:
        ratio, se = quick_cycle_ratio(model, i, t, u, h, n_paths, seed)
        bound = two_jump_bound(model, i, t, u, h, cfg) / h
        inp = {"i": i, "t": t, "u": u, "h": h, "n_paths": n_paths}
        reports.append(_at_most("quick_cycle_bound", inp, ratio, bound + 3 * se, {"stderr": se, "bound": bound}))
        if prev is not None:
            pr, pse, ph = prev
            slack = 3 * math.hypot(se, pse)
            reports.append(_at_most("quick_cycle_decay", {**inp, "previous_h": ph}, ratio, pr + slack,
                                    {"previous_ratio": pr, "slack": slack}))
        prev = (ratio, se, h)
    return reports


# ---------------------------------------------------------------------------
# forward equation residual
# ---------------------------------------------------------------------------


def _forward_terms(model, row, j, d):
    """Influx into j and the diagonal term -int_[0,d] q_j(t, v) p_ij(dv) at the row's time."""
    t = row.t
    influx = 0.0
    for k, m in enumerate(row.measures):
        if k == j:
            continue
        influx += float((model.rate(k, j, t, m.midpoints()) * m.cells).sum())
        if m.atom_present and m.atom_mass:
            influx += float(model.rate(k, j, t, m.atom_location)) * m.atom_mass
    m = row.measures[j]
    x = d / m.dt
    full = int(math.floor(x))
    weights = np.zeros(m.cells.size)
    weights[:min(full, m.cells.size)] = 1.0
    if full < m.cells.size:
        weights[full] = x - full
    out = float((model.total_rate(j, t, m.midpoints()) * m.cells * weights).sum())
    if m.atom_present and m.atom_mass and m.atom_location <= d:
        out += float(model.total_rate(j, t, m.atom_location)) * m.atom_mass
    return influx, -out


def forward_residual(model: IntensityModel, solution: RowSolution, j, d: float, t_grid) -> float:
    """Max over t_grid of |right difference in t of p_ij(., d) - (influx + diagonal - d-derivative)|.

    ``solution`` needs snapshots at t, t + dt and t - d for every t in the grid.
    """
    j = model.states.index(j)
    worst = 0.0
    for t in t_grid:
        now = solution.at(t)
        nxt = solution.at(t + solution.dt)
        lhs = (transition_prob(nxt, j, d) - transition_prob(now, j, d)) / solution.dt
        influx, diag = _forward_terms(model, now, j, d)
        deriv = duration_left_derivative(model, solution, j, t, d)
        worst = max(worst, abs(lhs - (influx + diag - deriv)))
    return worst


def check_forward_residual(model: IntensityModel, i0, s: float, u: float, d: float, t_grid,
                           dts=(4e-3, 2e-3), max_ratio: float = 0.6,
                           cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> CheckReport:
    """Max residual over states and t_grid shrinks by ``max_ratio`` or better when dt is halved.

    Use times with t - s - d bounded away from 0 so the no-jump atom does not
    cross d between t and t + dt.
    """
    t_grid = [float(t) for t in t_grid]
    res = []
    for dt in dts:
        t_end = max(t_grid) + dt
        sol = solve_row(model, i0, s, u, t_end, dt, output_times="all", cfg=cfg)
        res.append(max(forward_residual(model, sol, j, d, t_grid) for j in range(model.size)))
    inp = {"i0": i0, "s": s, "u": u, "d": d, "t_grid": t_grid, "dts": list(dts)}
    if res[0] == 0.0:
        return CheckReport("forward_residual", inp, 0.0, max_ratio, res[-1] == 0.0, max_ratio,
                           {"residuals": res})
    ratio = res[-1] / res[0]
    return _at_most("forward_residual", inp, ratio, max_ratio, {"residuals": res})


# ---------------------------------------------------------------------------
# embedded chain: history beyond (Y_{n-1}, T_{n-1}) carries no information
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainRecords:
    """One row per event n >= 2: (Y_{n-2}, Y_{n-1}, T_{n-1}, Y_n, S_n)."""

    prev2: np.ndarray
    prev: np.ndarray
    t_prev: np.ndarray
    mark: np.ndarray
    sojourn: np.ndarray

    def __len__(self):
        return self.mark.size


def chain_records(batch) -> ChainRecords:
    """Event records of a :class:`PathBatch`, with the start (y0, s0) playing the role of event 0."""
    P = len(batch)
    # flat arrays with each path's start prepended to its events
    starts = batch.offsets[:-1] + np.arange(P)
    y = np.empty(batch.states.size + P, dtype=np.int64)
    tt = np.empty(y.size)
    body = np.ones(y.size, bool)
    body[starts] = False
    y[starts], tt[starts] = batch.y0, batch.s0
    y[body], tt[body] = batch.states, batch.times
    pos = np.arange(y.size)
    n = pos - np.repeat(starts, batch.counts + 1)  # event index within its path
    k = pos[n >= 2]
    return ChainRecords(y[k - 2], y[k - 1], tt[k - 1], y[k], tt[k] - tt[k - 1])


@dataclass(frozen=True)
class HistoryDependentSampler:
    """Jump chain whose law depends on the state before the current one: not semi-Markov.

    From state a entered from state b, the sojourn is exponential with rate
    ``rates[a].sum() * (boost if b == 0 else 1)`` and the destination law is
    ``rates[a]`` tilted by ``tilt`` toward the lowest other state when
    b == 0.  Used as a test double that the embedded-chain test must reject.
    """

    rates: tuple
    boost: float = 1.5
    tilt: float = 0.2
    y0: int = 0

    def __call__(self, n_paths: int, n_events: int, seed: int) -> ChainRecords:
        Q = np.asarray(self.rates, float)
        S = Q.shape[0]
        g = substream(seed, 0)
        y_prev2 = np.full(n_paths, -1)
        y_prev = np.full(n_paths, self.y0)
        t = np.zeros(n_paths)
        rec = []
        for n in range(1, n_events + 1):
            flagged = y_prev2 == 0
            tot = Q[y_prev].sum(axis=1) * np.where(flagged, self.boost, 1.0)
            soj = g.exponential(size=n_paths) / tot
            p = Q[y_prev] / Q[y_prev].sum(axis=1, keepdims=True)
            low = np.where(y_prev == 0, 1, 0)
            shift = np.zeros_like(p)
            shift[np.arange(n_paths), low] = self.tilt
            p = np.where(flagged[:, None], p + shift, p)
            p[np.arange(n_paths), y_prev] = 0.0
            p /= p.sum(axis=1, keepdims=True)
            cum = np.cumsum(p, axis=1)
            dest = np.minimum((g.random(n_paths)[:, None] >= cum).sum(axis=1), S - 1)
            if n >= 2:
                rec.append((y_prev2.copy(), y_prev.copy(), t.copy(), dest, soj))
            y_prev2, y_prev, t = y_prev, dest, t + soj
        if not rec:
            e = np.empty(0)
            return ChainRecords(e.astype(int), e.astype(int), e, e.astype(int), e)
        cols = [np.concatenate([r[k] for r in rec]) for k in range(5)]
        return ChainRecords(*cols)


def embedded_chain_test(source, n_paths: int, n_events: int, seed: int, significance: float = 0.01,
                        n_time_bins: int = 4, min_samples: int = 50, y0=0, s0: float = 0.0) -> CheckReport:
    """Test that (Y_n, S_n) is independent of Y_{n-2} given (Y_{n-1}, T_{n-1}).

    Records are binned by Y_{n-1} and by quantiles of T_{n-1} within it.
    Inside each bin the records are grouped by Y_{n-2}; sojourns are compared
    pairwise with two-sample KS tests and marks with a chi-square
    contingency test.  All p-values are Bonferroni-corrected.  ``source`` is
    an :class:`IntensityModel` or a callable ``(n_paths, n_events, seed) ->
    ChainRecords``.
    """
    if isinstance(source, IntensityModel):
        if source.size < 3:
            raise DomainError("histories are only distinguishable with at least 3 states")
        batch = simulate_batch(source, y0, s0, 0.0, math.inf, n_paths, seed, stop_after=n_events)
        rec = chain_records(batch)
    else:
        rec = source(n_paths, n_events, seed)
    pvals, skipped, tests = [], [], []
    for a in np.unique(rec.prev):
        in_a = rec.prev == a
        edges = np.quantile(rec.t_prev[in_a], np.linspace(0, 1, n_time_bins + 1))
        tb = np.clip(np.searchsorted(edges, rec.t_prev[in_a], side="right") - 1, 0, n_time_bins - 1)
        idx_a = np.flatnonzero(in_a)
        for b in range(n_time_bins):
            cell = idx_a[tb == b]
            groups = [(g, cell[rec.prev2[cell] == g]) for g in np.unique(rec.prev2[cell])]
            groups = [(g, ix) for g, ix in groups if ix.size >= min_samples]
            if len(groups) < 2:
                skipped.append({"state": int(a), "time_bin": b, "records": int(cell.size)})
                continue
            for (g1, i1), (g2, i2) in itertools.combinations(groups, 2):
                p = ks_2samp(rec.sojourn[i1], rec.sojourn[i2]).pvalue
                pvals.append(p)
                tests.append({"kind": "ks", "state": int(a), "time_bin": b, "groups": [int(g1), int(g2)],
                              "p": float(p)})
            marks = np.unique(rec.mark[cell])
            if marks.size >= 2:
                table = np.array([[np.count_nonzero(rec.mark[ix] == m) for m in marks] for _, ix in groups])
                table = table[:, table.sum(axis=0) > 0]
                if table.shape[1] >= 2:
                    p = chi2_contingency(table)[1]
                    pvals.append(p)
                    tests.append({"kind": "chi2", "state": int(a), "time_bin": b, "p": float(p)})
    n_tests = len(pvals)
    min_p = float(min(pvals)) if pvals else 1.0
    adjusted = min(1.0, min_p * max(n_tests, 1))
    passed = adjusted >= significance
    return CheckReport("embedded_chain", {"n_paths": n_paths, "n_events": n_events, "seed": seed,
                                          "significance": significance},
                       adjusted, significance, passed, adjusted - significance,
                       {"n_tests": n_tests, "n_records": len(rec), "skipped_bins": skipped, "tests": tests})


def rejection_rate(source, n_paths: int, n_events: int, seeds, significance: float = 0.01, **kw) -> float:
    """Fraction of replications in which :func:`embedded_chain_test` rejects."""
    seeds = list(seeds)
    rej = sum(not embedded_chain_test(source, n_paths, n_events, sd, significance, **kw).passed for sd in seeds)
    return rej / len(seeds)
