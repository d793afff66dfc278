import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from smpkit.errors import ToleranceError
from smpkit.quadrature import adaptive_simpson


def test_polynomials_exact():
    out = adaptive_simpson(lambda x, k: x ** 3, [0.0, 1.0], [1.0, 2.0])
    assert np.allclose(out, [0.25, 3.75], atol=1e-14)


@given(st.floats(0, 3), st.floats(0.01, 3), st.floats(0.1, 3))
def test_matches_scipy_quad(a, w, c):
    f = lambda x: np.exp(-c * x) * np.sqrt(x + 0.1)  # noqa: E731
    got = adaptive_simpson(lambda x, k: f(x), [a], [a + w], tol=1e-11)[0]
    assert abs(got - quad(f, a, a + w, epsabs=1e-13)[0]) < 1e-9


def test_breaks_handle_jumps():
    f = lambda x, k: np.where(x < 0.3, 1.0, 5.0)  # noqa: E731
    got = adaptive_simpson(f, [0.0], [1.0], breaks=[[0.3]])
    assert math.isclose(got[0], 0.3 + 3.5, abs_tol=1e-12)


def test_depth_limit_raises():
    with pytest.raises(ToleranceError):
        adaptive_simpson(lambda x, k: np.sin(1.0 / np.maximum(x, 1e-300)), [1e-9], [1.0], tol=1e-14, max_depth=5)


def test_empty_interval_is_zero():
    assert adaptive_simpson(lambda x, k: x, [2.0], [2.0])[0] == 0.0
