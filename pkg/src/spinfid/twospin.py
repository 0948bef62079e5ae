"""Closed-form results for two spins on the z axis, one lattice step apart.

Quantum: the 4x4 problem is solved exactly. The z-pair coupling tensor is
diag(1, 1, -2), so the dipolar energies are -p/2 (both up), 0 (singlet),
+p (triplet m=0) and -p/2 (both down), and the x-polarized FID is
``cos(t) cos(1.5 p t)``. The factor 1.5 is recomputed numerically by
``convention_factor``.

Classical: in the frame rotating at the Larmor frequency and the slow time
tau = p t, the polar angles and the azimuth difference obey a closed
three-variable system with two integrals of motion. For zero total z
moment, c = cos(theta_1) is a Jacobi elliptic function of tau.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .elliptic import ellipk, jacobi_sn
from .geometry import build_explicit

__all__ = [
    "ZPAIR_ALPHA",
    "TwoSpinReducedState",
    "SingularityError",
    "quantum_sx",
    "convention_factor",
    "two_spin_eigs",
    "reduced_rhs",
    "invariants",
    "reduced_from_spins",
    "integrate_reduced",
    "integrate_c",
    "modulus_sq",
    "c_of_tau",
    "period_T",
    "measured_period",
    "homoclinic_c",
    "small_eps_c2",
]

ZPAIR_ALPHA = 1.5

# Eigenpairs as tabulated for this system (eigenvalues in units of the Larmor frequency).
TABULATED_ZPAIR = {
    "energies": lambda p: np.array([-1.0 - p, 2.0 * p, 0.0, 1.0 - p]),
    "vectors": np.array([[1, 0, 0, 0], [0, -1, 1, 0], [0, 1, 1, 0], [0, 0, 0, 1]]) / np.array(
        [[1.0], [np.sqrt(2)], [np.sqrt(2)], [1.0]]),
}


class SingularityError(ValueError):
    """Reduced equations evaluated at a pole (a spin along +-z)."""


@dataclass(frozen=True)
class TwoSpinReducedState:
    theta1: float
    theta2: float
    Phi: float
    tau: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.theta1, self.theta2, self.Phi])


def quantum_sx(t, p_d: float, alpha: float = ZPAIR_ALPHA):
    """Per-spin x polarization of the z pair, cos(t) cos(alpha p_d t)."""
    t = np.asarray(t, dtype=float)
    return np.cos(t) * np.cos(alpha * p_d * t)


def _zpair_spectrum(p_d: float):
    from .quantum import QuantumConfig, build_hamiltonian, diagonalize

    g = build_explicit([[0, 0, 0], [0, 0, 1]])
    return diagonalize(build_hamiltonian(QuantumConfig(g, p_d)))


def convention_factor(p_d: float) -> float:
    """Numerical alpha in cos(t) cos(alpha p t) from a direct 4x4 diagonalization.

    The x-polarized state overlaps the three triplet levels; its two
    transition frequencies are 1 +- alpha p.
    """
    E, V = _zpair_spectrum(p_d)
    psi0 = np.full(4, 0.5)
    weight = np.abs(V.conj().T @ psi0) ** 2
    levels = np.sort(E[weight > 1e-12])
    if levels.size != 3:
        raise RuntimeError("unexpected overlap structure for the z pair")
    w_low, w_high = levels[1] - levels[0], levels[2] - levels[1]
    return float((w_low - w_high) / (2.0 * p_d))


def two_spin_eigs(p_d: float) -> dict:
    """Computed z-pair eigenstructure next to the analytic and tabulated forms.

    Returns energies and vectors from the engine, the analytic energies in
    the same convention, the tabulated values, and the ratio of dipolar shifts
    (computed / tabulated) for the two fully polarized states.
    """
    if not p_d > 0:
        raise ValueError("p_d must be positive")
    E, V = _zpair_spectrum(p_d)
    analytic = np.sort(np.array([-1.0 - 0.5 * p_d, 0.0, p_d, 1.0 - 0.5 * p_d]))
    tabulated = TABULATED_ZPAIR["energies"](p_d)
    up_shift = E[0] + 1.0
    down_shift = E[-1] - 1.0
    return {
        "p_d": p_d,
        "energies": E,
        "vectors": V,
        "analytic_energies": analytic,
        "tabulated_energies": tabulated,
        "tabulated_vectors": TABULATED_ZPAIR["vectors"],
        "shift_ratio": (float(up_shift / (tabulated[0] + 1.0)), float(down_shift / (tabulated[3] - 1.0))),
        "alpha": convention_factor(p_d),
        "tabulated_alpha": 1.0,
    }


def reduced_rhs(state, tau: float = 0.0) -> np.ndarray:
    """Slow-time derivatives (dtheta1, dtheta2, dPhi)/dtau."""
    th1, th2, Phi = (state.theta1, state.theta2, state.Phi) if isinstance(
        state, TwoSpinReducedState) else state
    s1, s2 = np.sin(th1), np.sin(th2)
    if abs(s1) < 1e-300 or abs(s2) < 1e-300:
        raise SingularityError("a spin lies on the z axis; cot(theta) diverges")
    c1, c2 = np.cos(th1), np.cos(th2)
    sP, cP = np.sin(Phi), np.cos(Phi)
    return np.array([
        -s2 * sP,
        s1 * sP,
        2.0 * (c1 - c2) + (s1 * c2 / s2 - s2 * c1 / s1) * cP,
    ])


def invariants(theta1, theta2, Phi) -> tuple:
    """Total z moment M and dipolar energy integral E."""
    M = np.cos(theta1) + np.cos(theta2)
    E = np.sin(theta1) * np.sin(theta2) * np.cos(Phi) - 2.0 * np.cos(theta1) * np.cos(theta2)
    return M, E


def reduced_from_spins(e1, e2) -> TwoSpinReducedState:
    """Angles of two unit vectors; Phi is frame independent."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    th1 = np.arccos(np.clip(e1[..., 2], -1, 1))
    th2 = np.arccos(np.clip(e2[..., 2], -1, 1))
    Phi = np.arctan2(e1[..., 1], e1[..., 0]) - np.arctan2(e2[..., 1], e2[..., 0])
    Phi = np.mod(Phi + np.pi, 2 * np.pi) - np.pi
    return TwoSpinReducedState(th1, th2, Phi)


def integrate_reduced(state: TwoSpinReducedState, tau_grid, rtol: float = 1e-12,
                      atol: float = 1e-13) -> np.ndarray:
    """Reduced system on ``tau_grid`` (starting at ``state.tau``); rows are (theta1, theta2, Phi)."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    sol = solve_ivp(lambda s, y: reduced_rhs(y), (state.tau, tau_grid[-1]), state.as_array(),
                    method="DOP853", t_eval=tau_grid, rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(sol.message)
    return sol.y.T


def _check_E(E):
    if not 1.0 <= E <= 2.0:
        raise ValueError(f"E={E} outside the oscillatory range [1, 2]")


def modulus_sq(E: float) -> float:
    return 2.0 * (2.0 - E) / (E + 1.0)


def c_of_tau(E: float, tau, tau0: float = 0.0):
    """c^2(tau) = (1+E)/3 - (2(2-E)/3) sn^2(sqrt(1+E)(tau - tau0) | k^2), zero total z moment."""
    _check_E(E)
    sn = jacobi_sn(np.sqrt(1.0 + E) * (np.asarray(tau, dtype=float) - tau0), modulus_sq(E))
    return (1.0 + E) / 3.0 - (2.0 * (2.0 - E) / 3.0) * sn**2


def period_T(E: float) -> float:
    """Slow-time period 2 K(k^2) / sqrt(1 + E) of c^2."""
    if not 1.0 < E <= 2.0:
        raise ValueError(f"period is finite only for 1 < E <= 2, got {E}")
    return 2.0 * ellipk(modulus_sq(E)) / np.sqrt(1.0 + E)


def _c_poly(E):
    # (dc/dtau)^2 = (1 + E - 3c^2)(1 - E + c^2) = -3c^4 + (4E - 2)c^2 + (1 + E)(1 - E)
    return lambda c: -3.0 * c**4 + (4.0 * E - 2.0) * c**2 + (1.0 + E) * (1.0 - E)


def integrate_c(E: float, tau_grid, rtol: float = 1e-13, atol: float = 1e-14) -> np.ndarray:
    """c(tau) by direct integration, starting at c_max with zero slope.

    Uses the second-order form c'' = f'(c)/2 of (c')^2 = f(c), which carries
    the square-root branch through the turning points.
    """
    _check_E(E)
    c_max = np.sqrt((1.0 + E) / 3.0)

    def rhs(_, y):
        c = y[0]
        return [y[1], 0.5 * (-12.0 * c**3 + 2.0 * (4.0 * E - 2.0) * c)]

    tau_grid = np.asarray(tau_grid, dtype=float)
    sol = solve_ivp(rhs, (0.0, tau_grid[-1]), [c_max, 0.0], method="DOP853", t_eval=tau_grid,
                    rtol=rtol, atol=atol)
    return sol.y[0]


def measured_period(E: float, n_periods: int = 4) -> float:
    """Period of c(tau) from the spacing of maxima of the integrated solution."""
    c_max = np.sqrt((1.0 + E) / 3.0)

    def rhs(_, y):
        c = y[0]
        return [y[1], 0.5 * (-12.0 * c**3 + 2.0 * (4.0 * E - 2.0) * c)]

    def at_max(_, y):
        return y[1]

    at_max.direction = -1.0
    span = (n_periods + 0.5) * period_T(E) * 1.5
    sol = solve_ivp(rhs, (0.0, span), [c_max, 0.0], method="DOP853", events=at_max,
                    rtol=1e-13, atol=1e-15)
    hits = sol.t_events[0]
    hits = hits[hits > 1e-9]
    if hits.size < n_periods:
        raise RuntimeError("too few maxima found")
    return float(hits[n_periods - 1] / n_periods)


def homoclinic_c(tau, tau0: float = 0.0):
    """E = 1 separatrix, c(tau) = sqrt(2/3) sech(sqrt(2)(tau - tau0))."""
    return np.sqrt(2.0 / 3.0) / np.cosh(np.sqrt(2.0) * (np.asarray(tau, dtype=float) - tau0))


def small_eps_c2(eps: float, tau, tau0: float = 0.0):
    """Leading-order c^2 for E = 2 - eps: 1 - (eps/3)[2 - cos(2 sqrt(3)(tau - tau0))]."""
    tau = np.asarray(tau, dtype=float)
    return 1.0 - (eps / 3.0) * (2.0 - np.cos(2.0 * np.sqrt(3.0) * (tau - tau0)))
