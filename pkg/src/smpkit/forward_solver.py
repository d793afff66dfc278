"""Forward evolution of transition measures p_{i0 j}(s, t, u, dv) along characteristics.

The duration axis is cut into cells of width ``dt`` and time advances by the
same ``dt``, so a step moves every cell exactly one cell up in duration.
Cells are stored by the step in which their mass was born: the cell born
during step b covers durations [m dt, (m+1) dt) at step n > b, with
m = n - 1 - b.  Each step:

* a cell in state j keeps exp(-q_j dt) of its mass, with q_j taken at the
  step midpoint (t + dt/2, (m+1) dt);
* the lost mass is split over destinations k in proportion q_jk / q_j and
  deposited in the newborn cell [0, dt) of state k;
* point masses (the no-jump atom, plus any extra initial atoms) decay by the
  exact cumulative hazard along their characteristic; their losses are split
  the same way using midpoint rates.

Lost mass is moved rather than recomputed from a separate influx formula, so
total mass is conserved to rounding.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConservationError, DomainError, GridError, StepSizeError
from .hazard_kernel import DEFAULT_QUADRATURE, QuadratureConfig, row_hazard
from .state_model import IntensityModel, sup_norm

STEP_GUARD = 0.5
CONSERVATION_LIMIT = 1e-4
GRID_TOL = 1e-9
ATOM_TOL = 1e-12


@dataclass(frozen=True)
class DurationMeasure:
    """Mass over durations for one destination state.

    ``cells[m]`` is the mass on [m dt, (m+1) dt); ``atom_mass`` sits at the
    single point ``atom_location`` (absent when None).
    """

    cells: np.ndarray = field(repr=False)
    dt: float
    atom_mass: float = 0.0
    atom_location: float | None = None

    @property
    def atom_present(self) -> bool:
        return self.atom_location is not None

    @property
    def total(self) -> float:
        return float(self.cells.sum()) + self.atom_mass

    def cdf(self, d: float) -> float:
        """Mass on [0, d]; the straddling cell contributes linearly."""
        if d < 0:
            raise DomainError("duration must be nonnegative")
        x = d / self.dt
        k = int(math.floor(x))
        full = float(self.cells[:min(k, self.cells.size)].sum())
        if k < self.cells.size:
            full += (x - k) * float(self.cells[k])
        if self.atom_location is not None and self.atom_location <= d + ATOM_TOL * max(1.0, d):
            full += self.atom_mass
        return full

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells.size) + 0.5) * self.dt


@dataclass(frozen=True)
class TransitionRow:
    """Snapshot at time t of the row started from state i0 at time s with duration u."""

    i0: int
    s: float
    u: float
    t: float
    dt: float
    measures: tuple

    @property
    def marginals(self) -> np.ndarray:
        return np.array([m.total for m in self.measures])

    @property
    def total_mass(self) -> float:
        return float(self.marginals.sum())

    def __getitem__(self, j) -> DurationMeasure:
        return self.measures[j]


def transition_prob(row: TransitionRow, j: int, d: float = math.inf) -> float:
    """p_{i0 j}(s, t, u, [0, d]) read off a solver row."""
    return row.measures[j].cdf(d) if math.isfinite(d) else row.measures[j].total


def support_defect(row: TransitionRow) -> float:
    """Mass lying where no mass can be: cells at or beyond t - s, or an atom off u + t - s or outside i0."""
    span = row.t - row.s
    bad = 0.0
    for j, m in enumerate(row.measures):
        first_out = int(math.ceil(span / row.dt - GRID_TOL))
        bad += float(np.abs(m.cells[first_out:]).sum())
        bad += float(np.abs(np.minimum(m.cells, 0.0)).sum())
        if m.atom_mass:
            if j != row.i0 or m.atom_location is None or abs(m.atom_location - (row.u + span)) > GRID_TOL:
                bad += abs(m.atom_mass)
    return bad


@dataclass
class RowSolution:
    """Solver output: grid times plus snapshots at the requested output steps."""

    model: IntensityModel
    i0: int
    s: float
    u: float
    dt: float
    times: np.ndarray
    rows: dict  # step index -> TransitionRow
    defect: float
    leaked: float
    atom_mass: np.ndarray  # no-jump atom at every grid time

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> TransitionRow:
        return self.rows[self.times.size - 1]

    def step_of(self, t: float) -> int:
        n = int(round((t - self.s) / self.dt))
        if n < 0 or n >= self.times.size or abs(self.times[n] - t) > GRID_TOL * max(1.0, abs(t)):
            raise GridError(f"time {t} is not on the solver grid (step {self.dt})")
        return n

    def at(self, t: float) -> TransitionRow:
        n = self.step_of(t)
        if n not in self.rows:
            raise GridError(f"no snapshot stored at t={t}; request it through output_times")
        return self.rows[n]

    def __iter__(self):
        return (self.rows[n] for n in sorted(self.rows))


def _grid(t0: float, t_end: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise DomainError("dt must be positive")
    if t_end < t0:
        raise DomainError("t_end must be >= the start time")
    span = t_end - t0
    n = int(round(span / dt))
    if abs(n * dt - span) > GRID_TOL * max(1.0, span) or (n == 0 and span > 0):
        raise GridError(f"dt={dt} does not divide the interval length {span}")
    return np.linspace(t0, t_end, n + 1) if n else np.array([t0])


def _output_steps(times, output_times) -> set:
    last = times.size - 1
    if output_times is None:
        return {0, last}
    if isinstance(output_times, str):
        if output_times != "all":
            raise ValueError("output_times must be None, 'all' or a list of times")
        return set(range(times.size))
    steps = {0, last}
    dt = times[1] - times[0] if times.size > 1 else 1.0
    for t in output_times:
        n = int(round((t - times[0]) / dt))
        if n < 0 or n > last or abs(times[n] - t) > GRID_TOL * max(1.0, abs(t)):
            raise GridError(f"output time {t} is not on the solver grid")
        steps.add(n)
    return steps


def _split_rates(model, k, t, v):
    """Exit rates of state k (S, *shape) and their total."""
    q = model.exit_rates(k, t, v)
    return q, q.sum(axis=0)


def _evolve(model: IntensityModel, atoms, t0: float, times: np.ndarray, dt: float, steps: set,
            base_cells: int, keep: tuple, cfg: QuadratureConfig):
    """Core scheme.

    ``atoms`` is a list of (state, duration at t0, mass, binned).  Binned
    atoms are folded into the cell containing their current duration when a
    snapshot is taken; the unbinned one (at most one) is the no-jump atom.
    ``keep`` = (i0, s, u) labels the snapshots.
    Returns (snapshots, leaked, true-atom mass per step).
    """
    S = model.size
    N = times.size - 1
    mass = np.zeros((S, N))
    tm = 0.5 * (times[:-1] + times[1:])

    a_state = np.array([a[0] for a in atoms], dtype=np.int64)
    a_dur = np.array([a[1] for a in atoms], float)
    a_mass = np.array([a[2] for a in atoms], float)
    a_bin = np.array([a[3] for a in atoms], bool)

    # surviving atom mass at every grid time, and its losses per step split by destination
    surv = np.tile(a_mass[:, None], (1, N + 1))
    influx_atoms = np.zeros((S, N))
    leaked = 0.0
    for k in np.unique(a_state):
        sel = np.flatnonzero(a_state == k)
        if model.is_absorbing(int(k)) or N == 0:
            continue
        H = row_hazard(model, int(k), t0, a_dur[sel][:, None], times[None, :], cfg)
        surv[sel] = a_mass[sel][:, None] * np.exp(-H)
        lost = surv[sel, :-1] * -np.expm1(-np.diff(H, axis=1))
        q, qt = _split_rates(model, int(k), tm[None, :], a_dur[sel][:, None] + (tm - t0)[None, :])
        for when in (times[:-1], times[1:]):
            fix = (qt <= 0) & (lost > 0)
            if not fix.any():
                break
            v = a_dur[sel][:, None] + (when - t0)[None, :]
            q2, qt2 = _split_rates(model, int(k), np.broadcast_to(when[None, :], v.shape), v)
            q = np.where(fix[None], q2, q)
            qt = np.where(fix, qt2, qt)
        ok = qt > 0
        leaked += float(lost[~ok].sum())
        frac = np.where(ok[None], q / np.where(ok, qt, 1.0)[None], 0.0)
        influx_atoms += (frac * lost[None]).sum(axis=1)

    true_atom = np.flatnonzero(~a_bin)
    true_surv = surv[true_atom[0]] if true_atom.size else np.zeros(N + 1)

    snapshots = {}

    def snapshot(n):
        t = float(times[n])
        length = base_cells + n
        cells = np.zeros((S, length))
        if n:
            cells[:, :n] = mass[:, :n][:, ::-1]
        if a_bin.any():
            b = np.flatnonzero(a_bin)
            loc = a_dur[b] + (t - t0)
            m = np.floor(loc / dt + GRID_TOL).astype(np.int64)
            if m.size and m.max() >= length:
                grow = np.zeros((S, int(m.max()) + 1))
                grow[:, :length] = cells
                cells = grow
            np.add.at(cells, (a_state[b], m), surv[b, n])
        measures = []
        for j in range(S):
            if true_atom.size and a_state[true_atom[0]] == j:
                measures.append(DurationMeasure(cells[j], dt, float(true_surv[n]),
                                                float(a_dur[true_atom[0]] + t - t0)))
            else:
                measures.append(DurationMeasure(cells[j], dt))
        i0, s, u = keep
        snapshots[n] = TransitionRow(i0, s, u, t, dt, tuple(measures))

    if 0 in steps:
        snapshot(0)
    for n in range(N):
        influx = influx_atoms[:, n].copy()
        if n:
            dur = (n - np.arange(n)) * dt  # midpoint duration of each born cell during this step
            for j in range(S):
                if model.is_absorbing(j):
                    continue
                cur = mass[j, :n]
                q, qt = _split_rates(model, j, tm[n], dur)
                lost = cur * -np.expm1(-qt * dt)
                ok = qt > 0
                influx += (q[:, ok] / qt[ok] * lost[ok]).sum(axis=1)
                mass[j, :n] = cur - lost
        mass[:, n] = influx
        if n + 1 in steps:
            snapshot(n + 1)
    return snapshots, leaked, true_surv


def _guard(model, t0, t_end, max_dur, dt):
    if t_end <= t0:
        return
    sup = sup_norm(model, (t0, t_end), (0.0, max_dur + (t_end - t0)), resolution=101)
    if dt * sup > STEP_GUARD:
        raise StepSizeError(f"dt * sup|Q| = {dt * sup:.3g} exceeds {STEP_GUARD}; reduce dt")


def _finish(model, i0, s, u, dt, times, snaps, leaked, atom, initial=1.0):
    final = snaps[times.size - 1]
    defect = abs(initial - final.total_mass)
    if defect > CONSERVATION_LIMIT:
        raise ConservationError(f"mass defect {defect:.3g} exceeds {CONSERVATION_LIMIT} (leaked {leaked:.3g})")
    return RowSolution(model, i0, s, u, dt, times, snaps, defect, leaked, atom)


def solve_row(model: IntensityModel, i0, s: float, u: float, t_end: float, dt: float, output_times=None,
              cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> RowSolution:
    """Evolve the row of (i0, s, u) from s to t_end with step and cell width ``dt``.

    ``output_times`` selects snapshots: None keeps the first and last grid
    times, ``"all"`` keeps every step, a list keeps those (grid-aligned)
    times plus the endpoints.
    """
    i0 = model.states.index(i0)
    if s < 0 or u < 0:
        raise DomainError("s and u must be nonnegative")
    times = _grid(s, t_end, dt)
    dt = (t_end - s) / (times.size - 1) if times.size > 1 else float(dt)
    _guard(model, s, t_end, u, dt)
    steps = _output_steps(times, output_times)
    snaps, leaked, atom = _evolve(model, [(i0, float(u), 1.0, False)], s, times, dt, steps, 0, (i0, s, u), cfg)
    return _finish(model, i0, s, u, dt, times, snaps, leaked, atom)


def _first_leg_atoms(row: TransitionRow):
    atoms = []
    for k, m in enumerate(row.measures):
        mids = m.midpoints()
        for c in np.flatnonzero(m.cells):
            atoms.append((k, float(mids[c]), float(m.cells[c]), True))
        if m.atom_present:
            atoms.append((k, float(m.atom_location), float(m.atom_mass), False))
    return atoms


def compose(model: IntensityModel, first_leg: RowSolution, t: float, method: str = "superpose",
            cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> TransitionRow:
    """Row at t obtained by pushing the first leg's measure at r = first_leg.t_end forward to t.

    Every mass element of the first leg (a cell, taken at its midpoint, or
    the atom) is a starting point (k, r, v).  ``"superpose"`` evolves all of
    them in one pass, which is exact by linearity of the scheme;
    ``"mixture"`` solves a separate row from each element and sums the
    weighted results.
    """
    r = first_leg.t_end
    leg = first_leg.final
    dt = first_leg.dt
    n1 = first_leg.times.size - 1
    times = _grid(r, t, dt)
    keep = (first_leg.i0, first_leg.s, first_leg.u)
    atoms = _first_leg_atoms(leg)
    if not atoms:
        return TransitionRow(*keep, float(times[-1]), dt, leg.measures)
    max_dur = max(a[1] for a in atoms)
    if method == "superpose":
        _guard(model, r, t, max_dur, dt)
        snaps, _, _ = _evolve(model, atoms, r, times, dt, {times.size - 1}, n1, keep, cfg)
        return snaps[times.size - 1]
    if method != "mixture":
        raise ValueError("method must be 'superpose' or 'mixture'")
    S = model.size
    n2 = times.size - 1
    cells = np.zeros((S, n1 + n2))
    atom_mass, atom_loc, atom_state = 0.0, None, None
    for k, v, w, binned in atoms:
        sub = solve_row(model, k, r, v, t, dt, cfg=cfg).final
        for j, m in enumerate(sub.measures):
            cells[j, :m.cells.size] += w * m.cells
            if m.atom_present and m.atom_mass:
                if binned:
                    c = int(math.floor(m.atom_location / dt + GRID_TOL))
                    cells[j, c] += w * m.atom_mass
                else:
                    atom_mass += w * m.atom_mass
                    atom_loc, atom_state = m.atom_location, j
    if atom_state is None:
        atom_state = first_leg.i0
        atom_loc = first_leg.u + t - first_leg.s
    measures = tuple(DurationMeasure(cells[j], dt, atom_mass if j == atom_state else 0.0,
                                     atom_loc if j == atom_state else None) for j in range(S))
    return TransitionRow(*keep, float(times[-1]), dt, measures)


def duration_left_derivative(model: IntensityModel, solution: RowSolution, j, t: float, d: float,
                             cfg: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """Left derivative in d of p_{i0 j}(s, t, u, [0, d]).

    For d <= t - s this is the mass entering j at time t - d that has not
    left by t:
    sum_{k != j} int q_kj(t-d, v) p_{i0 k}(s, t-d, u, dv) * exp(-int_{t-d}^t q_j(r, r-(t-d)) dr),
    with the integral taken over the solver row at t - d.  Beyond t - s the
    measure has no density: the result is 0, except at the no-jump atom
    (j = i0, d = u + t - s) where it is infinite.
    """
    j = model.states.index(j)
    if not d > 0:
        raise DomainError("d must be positive")
    s, u, i0 = solution.s, solution.u, solution.i0
    span = t - s
    if d > span + GRID_TOL * max(1.0, span):
        if j == i0 and abs(d - (u + span)) <= GRID_TOL * max(1.0, d) and solution.at(t)[i0].atom_mass > 0:
            return math.inf
        return 0.0
    back = solution.at(t - d)
    total = 0.0
    for k, m in enumerate(back.measures):
        if k == j:
            continue
        if m.cells.size:
            total += float((model.rate(k, j, back.t, m.midpoints()) * m.cells).sum())
        if m.atom_present and m.atom_mass:
            total += float(model.rate(k, j, back.t, m.atom_location)) * m.atom_mass
    if total == 0.0:
        return 0.0
    return total * float(np.exp(-row_hazard(model, j, back.t, 0.0, t, cfg)))


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_rows_csv(rows, path, labels=None) -> None:
    """Columns (t, j, v_cell_mid_or_atom, mass); cells first, then the atom row of each state."""
    rows = list(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "j", "v_cell_mid_or_atom", "mass"])
        for row in rows:
            for j, m in enumerate(row.measures):
                lab = labels[j] if labels else str(j)
                for v, c in zip(m.midpoints(), m.cells):
                    w.writerow([_fmt(row.t), lab, _fmt(v), _fmt(c)])
                if m.atom_present:
                    w.writerow([_fmt(row.t), lab, _fmt(m.atom_location), _fmt(m.atom_mass)])
