"""Independent numerical oracles used to check stochastic components."""

import math

import numpy as np

from defirisk.numerics import std_normal_cdf


def _phi(z):
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def bivariate_upper_orthant(a: float, b: float, rho: float, n_nodes: int = 400) -> float:
    """P(Z1 > a, Z2 > b) for standard bivariate normals with correlation rho.

    Deterministic Gauss-Legendre quadrature of
    integral over z in (a, inf) of phi(z) * P(Z2 > b | Z1 = z) dz;
    the conditional law is normal(rho z, 1 - rho^2).  Exact limits are used
    for |rho| = 1 and rho = 0.
    """
    if not (-1.0 <= rho <= 1.0):
        raise ValueError(f"rho must lie in [-1, 1], got {rho}")
    if rho == 0.0:
        return (1.0 - std_normal_cdf(a)) * (1.0 - std_normal_cdf(b))
    if rho == 1.0:
        return 1.0 - std_normal_cdf(max(a, b))
    if rho == -1.0:
        # Z2 = -Z1: need Z1 > a and -Z1 > b.
        return max(0.0, std_normal_cdf(-b) - std_normal_cdf(a))
    hi = 9.0
    if a >= hi:
        return 0.0
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    # map [-1, 1] -> [a, hi]
    mid, half = 0.5 * (a + hi), 0.5 * (hi - a)
    z = mid + half * nodes
    denom = math.sqrt(1.0 - rho * rho)
    total = 0.0
    for zi, wi in zip(z, weights):
        tail = 1.0 - std_normal_cdf((b - rho * zi) / denom)
        total += wi * _phi(zi) * tail
    return half * total
