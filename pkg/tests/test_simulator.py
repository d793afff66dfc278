import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smpkit import catalog
from smpkit.errors import DomainError, ExplosionError
from smpkit.rng import substream
from smpkit.simulator import (Trajectory, jump_count, simulate_batch, simulate_path, state_at,
                              write_trajectories_csv)
from smpkit.state_model import CallableField, IntensityModel, constant_model, zero_model


def _traj(times, states, y0=0, s0=0.0, u0=0.0, horizon=5.0):
    return Trajectory(y0, s0, u0, horizon, np.array(times, float), np.array(states, int), True)


def test_zero_model_censored():
    tr = simulate_path(zero_model(2), 0, 0.0, 0.0, 4.0, substream(1, 0))
    assert tr.n_events == 0 and tr.censored and tr.end == 4.0


def test_absorbing_state_stops():
    m = catalog.absorbing3()
    b = simulate_batch(m, 0, 0.0, 0.0, 50.0, 500, 3)
    for tr in b:
        if tr.n_events:
            assert 2 not in tr.states[:-1]
    assert np.all(b.state_at(50.0)[0] == 2)


def test_alternating_renewal_mean_jumps():
    m = constant_model([[0, 1], [1, 0]])
    b = simulate_batch(m, 0, 0.0, 0.0, 10.0, 10000, 2024)
    n = b.counts
    assert abs(n.mean() - 10.0) <= 3 * n.std() / math.sqrt(n.size)


def test_state_at_examples():
    tr = _traj([1.0, 2.0], [1, 0], y0=0, s0=0.0, u0=1.0)
    assert state_at(tr, 0.0) == (0, 1.0, 0) or tuple(vars(state_at(tr, 0.0)).values()) == (0, 1.0, 0)
    q = state_at(tr, 2.0)
    assert (q.state, q.duration, q.jumps) == (0, 0.0, 2)
    empty = _traj([], [], y0=1, s0=0.0, u0=1.0)
    q = state_at(empty, 2.5)
    assert (q.state, q.duration, q.jumps) == (1, 3.5, 0)
    with pytest.raises(DomainError):
        state_at(tr, 6.0)


def test_jump_count_examples():
    assert jump_count(_traj([], []), 0.0, 3.0) == 0
    tr = _traj([1.0, 2.0], [1, 0])
    assert jump_count(tr, 0.5, 1.5) == 1
    assert jump_count(tr, 1.0, 1.0) == 0
    assert jump_count(tr, 1.0, 2.0) == 1


@given(st.integers(0, 2 ** 63), st.floats(0, 2), st.floats(0, 1))
def test_path_invariants(seed, s0, u0):
    m = catalog.duration3()
    tr = simulate_path(m, 0, s0, u0, s0 + 6.0, substream(seed, 0))
    if tr.n_events:
        assert tr.times[0] > s0
        assert np.all(np.diff(tr.times) > 0)
        marks = np.concatenate(([0], tr.states))
        assert np.all(marks[1:] != marks[:-1])
        assert tr.times[-1] <= tr.horizon
        # U just before each event equals the previous sojourn (u0 + T_1 - s0 first)
        pre = tr.pre_jump_durations()
        for n, t in enumerate(tr.times):
            before = state_at(tr, float(np.nextafter(t, -np.inf)))
            assert abs(before.duration - pre[n]) < 1e-9
            at = state_at(tr, float(t))
            assert at.state == tr.states[n] and at.duration == 0.0 and at.jumps == n + 1
    rng = np.random.default_rng(seed % 1000)
    a, b = np.sort(rng.uniform(s0, s0 + 6.0, 2))
    assert state_at(tr, b).duration - state_at(tr, a).duration <= b - a + 1e-12


def test_batch_matches_single_paths_bitwise():
    m = catalog.weibull2()
    b = simulate_batch(m, 0, 0.2, 0.4, 3.0, 40, 77)
    for k in (0, 13, 39):
        tr = simulate_path(m, 0, 0.2, 0.4, 3.0, substream(77, k))
        assert np.array_equal(tr.times, b.trajectory(k).times)
        assert np.array_equal(tr.states, b.trajectory(k).states)
    part = simulate_batch(m, 0, 0.2, 0.4, 3.0, 10, 77, first_path=30)
    assert np.array_equal(part.trajectory(9).times, b.trajectory(39).times)


def test_determinism():
    m = catalog.markov3()
    a = simulate_batch(m, 1, 0.0, 0.0, 5.0, 200, 5)
    b = simulate_batch(m, 1, 0.0, 0.0, 5.0, 200, 5)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)


def test_vectorized_queries_match_scalar():
    b = simulate_batch(catalog.markov3(), 0, 0.0, 0.3, 4.0, 100, 9)
    z, u, n = b.state_at(2.5)
    for k in range(0, 100, 7):
        q = b.trajectory(k).state_at(2.5)
        assert (z[k], n[k]) == (q.state, q.jumps) and abs(u[k] - q.duration) < 1e-12
    assert np.array_equal(b.jump_count(1.0, 3.0), [b.trajectory(k).jump_count(1.0, 3.0) for k in range(100)])


def test_explosion_guard():
    m = IntensityModel.from_entries(["a", "b"], {(0, 1): 1e3, (1, 0): 1e3})
    with pytest.raises(ExplosionError):
        simulate_path(m, 0, 0.0, 0.0, 10.0, substream(0, 0), max_jumps=100)


def test_stop_after():
    b = simulate_batch(catalog.markov3(), 0, 0.0, 0.0, math.inf, 50, 1, stop_after=3)
    assert np.all(b.counts == 3) and not b.censored.any()


def test_bad_arguments():
    with pytest.raises(DomainError):
        simulate_path(catalog.markov3(), 0, 1.0, 0.0, 0.5, substream(0, 0))
    with pytest.raises(DomainError):
        simulate_path(catalog.markov3(), 0, 0.0, 0.0, 1.0, substream(0, 0), max_jumps=0)
    with pytest.raises(DomainError):
        simulate_path(catalog.markov3(), 0, 0.0, 0.0, math.inf, substream(0, 0))


def test_trajectory_csv(tmp_path):
    b = simulate_batch(catalog.two_state(), 0, 0.0, 0.0, 2.0, 3, 8)
    p = tmp_path / "traj.csv"
    write_trajectories_csv(b, p, ["0", "1"])
    lines = p.read_text().splitlines()
    assert lines[0] == "path_id,event_index,time,state"
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == int(b.counts.sum()) + 2 * 3
    for k in range(3):
        mine = [r for r in rows if r[0] == str(k)]
        assert mine[0][1] == "0" and mine[-1][1] == "-1" and mine[-1][2] == "2"
