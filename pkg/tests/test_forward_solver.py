import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from smpkit import catalog
from smpkit.errors import DomainError, GridError, StepSizeError
from smpkit.forward_solver import (compose, duration_left_derivative, solve_row, support_defect, transition_prob,
                                   write_rows_csv)
from smpkit.hazard_kernel import survival
from smpkit.state_model import constant_model, zero_model

from conftest import exp_oracle


def test_zero_model_atom_persists():
    sol = solve_row(zero_model(3), 1, 0.5, 0.2, 2.5, 0.05)
    row = sol.final
    assert row[1].atom_mass == 1.0 and math.isclose(row[1].atom_location, 2.2)
    assert all(not m.cells.any() for m in row.measures)
    assert sol.defect == 0.0


def test_atom_unit_rate_survival():
    sol = solve_row(constant_model([[0, 1.0], [1.0, 0]]), 0, 0.0, 0.0, 1.0, 0.01)
    assert math.isclose(sol.final[0].atom_mass, 0.367879, abs_tol=1e-6)


def test_atom_matches_survival_along_characteristic():
    m = catalog.weibull2()
    sol = solve_row(m, 0, 0.3, 0.4, 1.3, 0.01, output_times="all")
    for t in (0.5, 0.8, 1.3):
        assert abs(sol.at(t)[0].atom_mass - survival(m, 0, 0.3, 0.4, t)) < 1e-9


def test_two_state_marginal(two_state):
    row = solve_row(two_state, 0, 0.0, 0.0, 1.0, 1e-3).final
    assert abs(row.marginals[0] - 0.741040) <= 5e-3
    assert abs(row.marginals[0] - (2 / 3 + math.exp(-1.5) / 3)) <= 1e-3


@pytest.mark.parametrize("i0", [0, 1, 2])
def test_markov_reduction(markov3, i0):
    row = solve_row(markov3, i0, 0.0, 0.7, 1.5, 1e-3).final
    P = exp_oracle(catalog.MARKOV3_RATES, 1.5)
    assert np.max(np.abs(row.marginals - P[i0])) <= 5e-3


def test_absorbing_chain_marginals():
    row = solve_row(catalog.absorbing3(), 0, 0.0, 0.0, 2.0, 1e-3).final
    P = exp_oracle([[0, .8, .4], [0, 0, 1.1], [0, 0, 0]], 2.0)
    assert np.max(np.abs(row.marginals - P[0])) <= 5e-3


@settings(max_examples=15)
@given(st.floats(0, 2), st.floats(0, 1), st.integers(1, 40))
def test_conservation_and_support(s, u, n):
    dt = 0.02
    sol = solve_row(catalog.duration3(), 0, s, u, s + n * dt, dt, output_times="all")
    for row in sol:
        assert abs(row.total_mass - 1.0) < 1e-6 * max(row.t - s, 1.0)
        assert support_defect(row) == 0.0


def test_cdf_properties(duration_model):
    s, u, t = 0.2, 0.5, 1.2
    row = solve_row(duration_model, 0, s, u, t, 0.01).final
    for j in (0, 1):
        ds = np.linspace(0, 2.5, 101)
        vals = [transition_prob(row, j, d) for d in ds]
        assert vals[0] == 0.0
        assert np.all(np.diff(vals) >= -1e-15)
        assert math.isclose(transition_prob(row, j, u + t - s), row.marginals[j], rel_tol=1e-12)
    # the atom sits at u + t - s: closed at the right
    a = row[0]
    assert transition_prob(row, 0, u + t - s) - transition_prob(row, 0, (u + t - s) * (1 - 1e-9)) >= a.atom_mass - 1e-12
    # nothing of state 1 beyond t - s
    assert transition_prob(row, 1, t - s) == pytest.approx(row.marginals[1], abs=1e-15)
    with pytest.raises(DomainError):
        transition_prob(row, 0, -0.1)


def test_step_size_guard():
    fast = constant_model([[0, 30.0], [30.0, 0]])
    with pytest.raises(StepSizeError):
        solve_row(fast, 0, 0.0, 0.0, 1.0, 0.1)


def test_grid_errors(two_state):
    with pytest.raises(GridError):
        solve_row(two_state, 0, 0.0, 0.0, 1.0, 0.3)
    with pytest.raises(GridError):
        solve_row(two_state, 0, 0.0, 0.0, 1.0, 0.1, output_times=[0.55])
    sol = solve_row(two_state, 0, 0.0, 0.0, 1.0, 0.1, output_times=[0.5])
    assert sol.at(0.5).t == pytest.approx(0.5)
    with pytest.raises(GridError):
        sol.at(0.3)  # on grid, not stored
    with pytest.raises(DomainError):
        solve_row(two_state, 0, 1.0, 0.0, 0.5, 0.1)


def test_compose_identities(two_state):
    first = solve_row(two_state, 0, 0.0, 0.0, 0.6, 0.02)
    same = compose(two_state, first, 0.6)
    assert np.allclose(same.marginals, first.final.marginals, atol=1e-15)
    start = solve_row(two_state, 0, 0.3, 0.1, 0.3, 0.02)
    via = compose(two_state, start, 0.9)
    direct = solve_row(two_state, 0, 0.3, 0.1, 0.9, 0.02).final
    assert np.allclose(via.marginals, direct.marginals, atol=1e-12)


def test_compose_matches_direct_weibull():
    m = catalog.weibull2()
    s, t, dt = 0.0, 2.0, 0.01
    first = solve_row(m, 0, s, 0.0, (s + t) / 2, dt)
    direct = solve_row(m, 0, s, 0.0, t, dt).final
    composed = compose(m, first, t)
    assert np.max(np.abs(composed.marginals - direct.marginals)) <= 1e-2


def test_mixture_agrees_with_superpose(duration_model):
    first = solve_row(duration_model, 0, 0.0, 0.2, 0.3, 0.05)
    a = compose(duration_model, first, 0.6, method="superpose")
    b = compose(duration_model, first, 0.6, method="mixture")
    assert np.allclose(a.marginals, b.marginals, atol=1e-12)
    for j in (0, 1):
        assert np.allclose(a[j].cells, b[j].cells, atol=1e-12)
    with pytest.raises(ValueError):
        compose(duration_model, first, 0.6, method="cache")


def test_duration_derivative_finite_difference(two_state):
    dt = 1e-3
    sol = solve_row(two_state, 0, 0.0, 0.0, 1.0, dt, output_times="all")
    row = sol.final
    d = 0.5
    fd = (transition_prob(row, 1, d) - transition_prob(row, 1, d - dt)) / dt
    val = duration_left_derivative(two_state, sol, 1, 1.0, d)
    assert abs(val - fd) <= 0.05 * abs(fd)


def test_duration_derivative_edge_cases(two_state):
    sol = solve_row(two_state, 0, 0.0, 0.2, 1.0, 0.01, output_times="all")
    assert duration_left_derivative(two_state, sol, 1, 1.0, 1.1) == 0.0
    assert duration_left_derivative(two_state, sol, 0, 1.0, 1.2) == math.inf
    assert duration_left_derivative(two_state, sol, 0, 1.0, 1.1) == 0.0
    zsol = solve_row(zero_model(2), 0, 0.0, 0.0, 1.0, 0.1, output_times="all")
    assert duration_left_derivative(zero_model(2), zsol, 1, 1.0, 0.5) == 0.0
    with pytest.raises(DomainError):
        duration_left_derivative(two_state, sol, 1, 1.0, 0.0)
    with pytest.raises(GridError):
        duration_left_derivative(two_state, sol, 1, 1.0, 0.505)


def test_rows_csv(tmp_path, two_state):
    row = solve_row(two_state, 0, 0.0, 0.0, 0.1, 0.05).final
    p = tmp_path / "row.csv"
    write_rows_csv([row], p, ["x", "y"])
    lines = p.read_text().splitlines()
    assert lines[0] == "t,j,v_cell_mid_or_atom,mass"
    masses = [float(ln.split(",")[3]) for ln in lines[1:]]
    assert math.isclose(sum(masses), 1.0, abs_tol=1e-10)
