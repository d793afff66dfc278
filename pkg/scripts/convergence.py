"""Convergence of the forward solver: Markov error against dt and difference quotients against h.

    python3 scripts/convergence.py
"""
import logging

import numpy as np

from smpkit import catalog
from smpkit.forward_solver import solve_row
from smpkit.verification import fitted_order, quotient_sweep


def expm_row(Q, i, t):
    from scipy.linalg import expm
    G = np.array(Q, float)
    np.fill_diagonal(G, -G.sum(axis=1))
    return expm(G * t)[i]


def main():
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    m = catalog.markov3()
    dts = [8e-3, 4e-3, 2e-3, 1e-3]
    errs = [float(np.abs(solve_row(m, 0, 0.0, 0.0, 2.0, dt).final.marginals
                         - expm_row(catalog.MARKOV3_RATES, 0, 2.0)).max()) for dt in dts]
    for dt, e in zip(dts, errs):
        logging.info("markov3  dt=%.0e  max error %.3e", dt, e)
    logging.info("markov3  order in dt %.3f", fitted_order(dts, errs))

    hs = [0.1 * 2.0 ** -k for k in range(5)]
    _, err = quotient_sweep(catalog.duration_hazard(), 1.0, 0.5, hs, hs[-1] / 32)
    for h, e in zip(hs, err):
        logging.info("quotient h=%.5f  max |quotient - Q| %.3e", h, e)
    logging.info("quotient order in h %.3f", fitted_order(hs, err))


if __name__ == "__main__":
    main()
