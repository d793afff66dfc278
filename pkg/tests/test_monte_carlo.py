import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from smpkit import catalog
from smpkit.monte_carlo import (EstimatorSummary, cdf_rows, estimate_atom, estimate_duration_cdf,
                                estimate_duration_cdfs, estimate_multijump, estimate_transition, merge, tally,
                                transition_rows, write_estimates_csv)
from smpkit.state_model import zero_model

from conftest import exp_oracle


def test_zero_model_transition():
    est = estimate_transition(zero_model(3), 1, 0.0, 0.0, 2.0, 100, 1)
    assert list(est.estimate) == [0.0, 1.0, 0.0]


def test_two_state_transition_against_oracle(two_state):
    est = estimate_transition(two_state, 0, 0.0, 0.0, 1.0, 200000, 11)
    p00 = 2 / 3 + math.exp(-1.5) / 3
    assert math.isclose(p00, exp_oracle([[0, 0.5], [1.0, 0]], 1.0)[0, 0], rel_tol=1e-12)
    assert abs(p00 - 0.741040) < 5e-6
    assert abs(est.estimate[0] - p00) <= 3 * est.stderr[0]
    assert est.counts.sum() == est.n


def test_absorbing_start_indicator():
    est = estimate_transition(catalog.absorbing3(), 2, 0.0, 0.0, 3.0, 500, 2)
    assert list(est.estimate) == [0.0, 0.0, 1.0]


def test_markov3_rows_within_se(markov3):
    P = exp_oracle(catalog.MARKOV3_RATES, 1.5)
    est = estimate_transition(markov3, 2, 0.0, 0.0, 1.5, 50000, 5)
    assert np.all(np.abs(est.estimate - P[2]) <= 3.5 * est.stderr + 1e-12)


def test_cdf_support_and_monotonicity(duration_model):
    s, u, t = 0.5, 0.3, 2.0
    grid = [0.2, 0.7, 1.2, t - s, 1.6, u + t - s, 3.0]
    cdfs = estimate_duration_cdfs(duration_model, 0, s, u, t, grid, 20000, 3)
    marg = estimate_transition(duration_model, 0, s, u, t, 20000, 3)
    for j, c in cdfs.items():
        assert np.all(np.diff(c.counts) >= 0)
        assert c.estimate[-1] == marg.estimate[j]
    # i != j: nothing beyond t - s
    c1 = cdfs[1].counts
    assert c1[grid.index(t - s)] == c1[grid.index(1.6)] == c1[-1]
    assert cdfs[0].estimate[grid.index(u + t - s)] == marg.estimate[0]


def test_zero_model_cdf_is_aging_atom():
    c = estimate_duration_cdf(zero_model(2), 0, 0.0, 1.0, 2.0, 0, [2.9, 3.0, 3.5], 50, 1)
    assert list(c.estimate) == [0.0, 1.0, 1.0]
    atom = estimate_atom(zero_model(2), 0, 0.0, 1.0, 2.0, 50, 1)
    assert atom.location == 3.0 and atom.mass == 1.0


def test_atom_estimate_matches_survival(two_state):
    a = estimate_atom(two_state, 0, 0.0, 0.2, 1.0, 50000, 4)
    assert abs(a.mass - math.exp(-0.5)) <= 3 * a.stderr


def test_multijump_examples():
    assert estimate_multijump(zero_model(2), 0, 0.0, 0.0, 0.5, 100, 1).counts[0] == 0
    assert estimate_multijump(catalog.one_jump(), 0, 0.0, 0.0, 5.0, 2000, 1).counts[0] == 0
    est = estimate_multijump(catalog.unit_norm3(), 0, 0.0, 0.0, 0.1, 50000, 2)
    p, se = est[">=2"]
    assert p <= 0.005 + 3 * se


def test_merge_invariance(markov3):
    full = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 4000, 21)
    a = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 2000, 21)
    b = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 2000, 21, first_path=2000)
    m = merge(a, b)
    assert m.n == full.n and np.array_equal(m.counts, full.counts)
    small = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 4000, 21, chunk=333)
    assert np.array_equal(small.counts, full.counts)


def test_thread_count_does_not_matter(markov3, monkeypatch):
    monkeypatch.setenv("SMPKIT_THREADS", "1")
    one = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 3000, 8, chunk=500)
    monkeypatch.setenv("SMPKIT_THREADS", "4")
    four = estimate_transition(markov3, 0, 0.0, 0.0, 1.0, 3000, 8, chunk=500)
    assert np.array_equal(one.counts, four.counts)


def _summary(n, counts):
    return EstimatorSummary(n, np.array(counts), ("a", "b"))


@given(st.integers(1, 1000), st.integers(1, 1000), st.integers(1, 1000), st.data())
def test_merge_associative_commutative(n1, n2, n3, data):
    parts = [_summary(n, [data.draw(st.integers(0, n)), data.draw(st.integers(0, n))]) for n in (n1, n2, n3)]
    a, b, c = parts
    left, right = merge(merge(a, b), c), merge(a, merge(b, c))
    assert left.n == right.n == n1 + n2 + n3
    assert np.array_equal(left.counts, right.counts)
    assert np.array_equal(merge(a, b).counts, merge(b, a).counts)
    assert np.all((left.estimate >= 0) & (left.estimate <= 1))


def test_stderr_scaling():
    a = EstimatorSummary(1000, np.array([300]), ("x",))
    b = EstimatorSummary(3000, np.array([900]), ("x",))
    assert math.isclose(a.stderr[0] / b.stderr[0], math.sqrt(3))


def test_wilson_interval_for_rare_counts():
    s = EstimatorSummary(1000, np.array([0, 500]), ("rare", "common"))
    lo, hi = s.interval(0.05)
    assert lo[0] == 0.0 and hi[0] > 0.0  # not zero-width
    assert math.isclose(hi[1] - 0.5, 1.959963984540054 * s.stderr[1])


def test_merge_rejects_mismatched_keys():
    with pytest.raises(ValueError):
        merge(_summary(5, [1, 2]), EstimatorSummary(5, np.array([1]), ("a",)))


def test_csv_export(tmp_path, two_state):
    est = estimate_transition(two_state, 0, 0.0, 0.0, 1.0, 500, 1)
    cdfs = estimate_duration_cdfs(two_state, 0, 0.0, 0.0, 1.0, [0.5, 1.0], 500, 1)
    rows = transition_rows(two_state, 0, 0.0, 0.0, 1.0, est) + cdf_rows(two_state, 0, 0.0, 0.0, 1.0, cdfs)
    p = tmp_path / "mc.csv"
    write_estimates_csv(rows, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "i,j,s,t,u,d_or_total,estimate,stderr,n"
    assert len(lines) == 1 + 2 + 4
    assert lines[1].split(",")[5] == "total"


def test_custom_tally_reducer(markov3):
    summ = tally(markov3, 0, 0.0, 0.0, 1.0, 1000, 3, lambda b: np.array([int((b.counts == 0).sum())]), ["none"])
    p, se = summ["none"]
    assert abs(p - math.exp(-0.8)) < 4 * se + 1e-3
