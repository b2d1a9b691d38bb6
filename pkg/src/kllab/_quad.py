"""Quadrature tables shared by the compiled and the numpy panel kernels."""

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

P = 12
NODES, WEIGHTS = leggauss(P)
# nodal values -> Legendre coefficients, a_n = sum_i COEF[n, i] q_i
COEF = ((2 * np.arange(P) + 1) / 2)[:, None] * legvander(NODES, P - 1).T * WEIGHTS[None, :]
SIGNS = (-1.0) ** np.arange(P)

# Bernstein-ellipse parameter below which plain Gauss is replaced by product integration
NEAR_RHO = 3.0
# below this the forward Legendre-Q recurrence is stable enough
FORWARD_RHO = 1.8

# panel kinds
LEFT, INTERIOR, RIGHT = 0, 1, 2


def panel_nodes(kind, lo, hi):
    """Abscissae and dx/ds of the Gauss nodes of one panel.

    Tip panels use a quadratic map so that a 1/sqrt endpoint density
    becomes smooth in the panel parameter.
    """
    if kind == INTERIOR:
        h = 0.5 * (hi - lo)
        return 0.5 * (lo + hi) + h * NODES, np.full(P, h)
    L = hi - lo
    if kind == LEFT:
        t = 0.5 * (NODES + 1)
        return lo + L * t * t, L * t
    t = 0.5 * (1 - NODES)
    return hi - L * t * t, L * t
