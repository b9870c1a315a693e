"""Numerical null controllability of a stochastic fourth-order parabolic equation.

Modules: weights (Carleman weights), grid (finite differences), filtration
(binary-tree Brownian motion), spde (forward and backward solvers), identity
(pointwise weighted identity), carleman (estimate sides), hum (penalized
control), semilinear (fixed-point controls), config and cli (runner).
"""

__version__ = "0.1.0"
