"""Complete elliptic integral K and Jacobi sn by the arithmetic-geometric mean.

The parameter ``m`` is the squared modulus, k^2.
"""
from __future__ import annotations

import numpy as np

__all__ = ["agm", "ellipk", "jacobi_sn"]

_MAX_ITER = 64


def agm(a: float, b: float, tol: float = 1e-16) -> float:
    for _ in range(_MAX_ITER):
        if abs(a - b) <= tol * abs(a):
            break
        a, b = 0.5 * (a + b), np.sqrt(a * b)
    return 0.5 * (a + b)


def ellipk(m: float) -> float:
    """K(m) = pi / (2 AGM(1, sqrt(1 - m))); infinite at m = 1."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"parameter m={m} outside [0, 1]")
    if m == 1.0:
        return np.inf
    return np.pi / (2.0 * agm(1.0, np.sqrt(1.0 - m)))


def jacobi_sn(u, m: float):
    """sn(u | m) by the descending Landen (AGM) scheme."""
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"parameter m={m} outside [0, 1]")
    u = np.asarray(u, dtype=float)
    if m == 0.0:
        return np.sin(u)
    if m == 1.0:
        return np.tanh(u)
    a, b, c = 1.0, np.sqrt(1.0 - m), np.sqrt(m)
    ratios = []
    n = 0
    while abs(c) > 1e-17 and n < _MAX_ITER:
        a_next = 0.5 * (a + b)
        c = 0.5 * (a - b)
        b = np.sqrt(a * b)
        a = a_next
        ratios.append(c / a)
        n += 1
    phi = (2.0**n) * a * u
    for r in reversed(ratios):
        phi = 0.5 * (phi + np.arcsin(r * np.sin(phi)))
    return np.sin(phi)
