"""Reference models used by the experiments, the CLI examples and the test suite."""
from __future__ import annotations

import numpy as np

from .state_model import Constant, Exponential, IntensityModel, PowerLaw, ProductField, constant_model

# three-state Markov model, all rates in [0.3, 1.5]
MARKOV3_RATES = np.array([
    [0.0, 0.5, 0.3],
    [1.2, 0.0, 0.4],
    [0.6, 1.5, 0.0],
])


def markov3() -> IntensityModel:
    return constant_model(MARKOV3_RATES, ["a", "b", "c"])


def two_state(q01: float = 0.5, q10: float = 1.0) -> IntensityModel:
    return constant_model([[0.0, q01], [q10, 0.0]])


def duration_hazard() -> IntensityModel:
    """q_01(t, u) = 2u, q_10 = 1."""
    return IntensityModel.from_entries(["0", "1"], {
        (0, 1): ProductField(Constant(1.0), PowerLaw(2.0, 1.0)),
        (1, 0): 1.0,
    })


def unit_norm3() -> IntensityModel:
    """Constant three-state model whose rows all sum to 1, so |Q| = 1 everywhere."""
    return constant_model([[0.0, 0.5, 0.5], [0.4, 0.0, 0.6], [0.7, 0.3, 0.0]])


def weibull2() -> IntensityModel:
    """Two states, Weibull-type duration hazards with a slowly growing calendar-time factor."""
    return IntensityModel.from_entries(["0", "1"], {
        (0, 1): ProductField(Exponential(1.0, 0.25), PowerLaw(1.5, 0.5)),
        (1, 0): ProductField(Constant(1.0), PowerLaw(2.0, 1.0)),
    })


def duration3() -> IntensityModel:
    """Three states with duration-dependent (time-homogeneous) hazards."""
    return IntensityModel.from_entries(["a", "b", "c"], {
        (0, 1): ProductField(Constant(1.0), PowerLaw(1.2, 1.0)),
        (0, 2): 0.3,
        (1, 0): ProductField(Constant(1.0), PowerLaw(0.8, 0.5)),
        (1, 2): ProductField(Constant(1.0), PowerLaw(0.5, 2.0)),
        (2, 0): 0.6,
        (2, 1): ProductField(Constant(1.0), PowerLaw(1.0, 1.0)),
    })


def absorbing3() -> IntensityModel:
    """Upper-triangular chain 0 -> 1 -> 2 with state 2 absorbing."""
    return constant_model([[0.0, 0.8, 0.4], [0.0, 0.0, 1.1], [0.0, 0.0, 0.0]])


def one_jump() -> IntensityModel:
    """Two states, the second absorbing: at most one event per path."""
    return constant_model([[0.0, 1.0], [0.0, 0.0]])
