"""Exact FID of N dipolar-coupled spin-1/2 particles.

Dimensionless units: energies in units of the Larmor frequency, time
``t = omega_0 t_phys``. The Hamiltonian is

    H = -S^z + p_d * sum_{j<k} sum_ab D_jk^ab S_j^a S_k^b

with ``D_jk = I/r^3 - 3 r r^T/r^5`` (lattice-step units). It is diagonalized
densely; the state is then propagated exactly in the eigenbasis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .analysis import FidTrace
from .geometry import SpinGeometry, dipolar_tensor, secular_tensor

__all__ = [
    "MAX_QUANTUM_SPINS",
    "QuantumConfig",
    "EigenSystem",
    "QuantumFidResult",
    "ResourceLimitError",
    "spin_operators",
    "build_hamiltonian",
    "diagonalize",
    "initial_state_x",
    "prepare",
    "evolve_expectations",
    "run_quantum",
    "default_time_grid",
]

log = logging.getLogger(__name__)

MAX_QUANTUM_SPINS = 13

_SX = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex) / 2)
_SY = sp.csr_matrix(np.array([[0, -1j], [1j, 0]], dtype=complex) / 2)
_SZ = sp.csr_matrix(np.array([[1, 0], [0, -1]], dtype=complex) / 2)


class ResourceLimitError(ValueError):
    """Requested system exceeds the dense-diagonalization cap."""


@dataclass(frozen=True)
class QuantumConfig:
    geometry: SpinGeometry
    p_d: float
    secular_only: bool = False

    def __post_init__(self):
        n = self.geometry.n_spins
        if n > MAX_QUANTUM_SPINS:
            raise ResourceLimitError(
                f"{n} quantum spins requested; dense diagonalization is capped at "
                f"{MAX_QUANTUM_SPINS} (2^{MAX_QUANTUM_SPINS} states)")
        if not self.p_d > 0:
            raise ValueError(f"p_d must be positive, got {self.p_d}")

    @property
    def n_spins(self) -> int:
        return self.geometry.n_spins


def default_time_grid(t_max: float = 2000.0, dt: float = 0.5) -> np.ndarray:
    """Uniform grid ``0, dt, ..., t_max - dt`` (M = t_max/dt samples)."""
    m = int(round(t_max / dt))
    return np.arange(m) * dt


def spin_operators(n: int) -> list[tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]]:
    """Per-site (S^x, S^y, S^z) as sparse 2^n x 2^n matrices; site 0 is the leftmost factor."""
    ops = []
    for i in range(n):
        left = sp.identity(2**i, dtype=complex, format="csr")
        right = sp.identity(2 ** (n - i - 1), dtype=complex, format="csr")
        ops.append(tuple(sp.kron(sp.kron(left, s), right, format="csr") for s in (_SX, _SY, _SZ)))
    return ops


def build_hamiltonian(cfg: QuantumConfig) -> np.ndarray:
    """Dense Hermitian Hamiltonian matrix (complex128)."""
    n = cfg.n_spins
    ops = spin_operators(n)
    D = secular_tensor(cfg.geometry) if cfg.secular_only else dipolar_tensor(cfg.geometry)
    dim = 2**n
    H = sp.csr_matrix((dim, dim), dtype=complex)
    for j in range(n):
        H = H - ops[j][2]
    for j in range(n):
        for k in range(j + 1, n):
            for a in range(3):
                for b in range(3):
                    c = D[j, k, a, b]
                    if c != 0.0:
                        H = H + (cfg.p_d * c) * (ops[j][a] @ ops[k][b])
    return H.toarray()


def diagonalize(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError("Hamiltonian must be square")
    asym = np.max(np.abs(H - H.conj().T)) if H.size else 0.0
    if asym > 1e-12:
        raise ValueError(f"matrix is not Hermitian (max asymmetry {asym:.3e})")
    return np.linalg.eigh(H)


def initial_state_x(n_spins: int) -> np.ndarray:
    """All spins along +x: the product of (1, 1)/sqrt(2) states."""
    if n_spins < 1:
        raise ValueError("need at least one spin")
    dim = 2**n_spins
    return np.full(dim, 1.0 / np.sqrt(dim), dtype=complex)


def _total_ops(n: int):
    """Total S^+ and the diagonal of total S^z in the computational basis."""
    idx = np.arange(2**n)
    # bit (n-1-i) of the index is 0 for spin i up
    bits = (idx[:, None] >> (n - 1 - np.arange(n))[None, :]) & 1
    sz_diag = 0.5 * (n - 2 * bits.sum(axis=1))
    rows, cols = [], []
    for i in range(n):
        mask = 1 << (n - 1 - i)
        down = idx[(idx & mask) != 0]
        rows.append(down ^ mask)  # S_i^+ |down_i> = |up_i>
        cols.append(down)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    splus = sp.csr_matrix((np.ones(rows.size, dtype=complex), (rows, cols)), shape=(2**n, 2**n))
    return splus, sz_diag


@dataclass(frozen=True, eq=False)
class EigenSystem:
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    n_spins: int

    @cached_property
    def _ops(self):
        return _total_ops(self.n_spins)

    @cached_property
    def observable_elements(self) -> dict[str, np.ndarray]:
        """Eigenbasis matrix elements <v_i|S^a|v_j> of the total spin components.

        O(R^3) to build; intended for analysis of small systems.
        """
        splus, sz = self._ops
        V = self.vectors
        sx = 0.5 * (splus + splus.getH())
        sy = -0.5j * (splus - splus.getH())
        return {
            "x": V.conj().T @ (sx @ V),
            "y": V.conj().T @ (sy @ V),
            "z": V.conj().T @ (sz[:, None] * V),
        }

    def state(self, t: float) -> np.ndarray:
        return self.vectors @ (self.coefficients * np.exp(-1j * self.energies * t))


def prepare(cfg: QuantumConfig, psi0: np.ndarray | None = None) -> EigenSystem:
    """Build, diagonalize, and project the initial state onto the eigenbasis."""
    n = cfg.n_spins
    log.info("building %d-spin Hamiltonian (dim %d)", n, 2**n)
    E, V = diagonalize(build_hamiltonian(cfg))
    if psi0 is None:
        psi0 = initial_state_x(n)
    C = V.conj().T @ psi0
    return EigenSystem(energies=E, vectors=V, coefficients=C, n_spins=n)


@dataclass(frozen=True)
class QuantumFidResult:
    trace: FidTrace
    energies: np.ndarray


def evolve_expectations(es: EigenSystem, t_grid: np.ndarray, chunk: int = 256) -> FidTrace:
    """Per-spin expectation values of S^x, S^y, S^z on ``t_grid``.

    Psi(t) = sum_i C_i v_i exp(-i E_i t) is formed for a block of times at a
    time and the total-spin operators are applied in the computational basis.
    Values are divided by N/2 so a fully x-polarized state has S^x = 1.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    splus, sz = es._ops
    norm = es.n_spins / 2.0
    out = np.empty((3, t_grid.size))
    for s in range(0, t_grid.size, chunk):
        tt = t_grid[s:s + chunk]
        W = es.coefficients[:, None] * np.exp(-1j * np.outer(es.energies, tt))
        psi = es.vectors @ W
        plus = np.einsum("it,it->t", psi.conj(), splus @ psi)
        zexp = np.einsum("it,it->t", psi.conj(), sz[:, None] * psi)
        if np.max(np.abs(zexp.imag)) > 1e-9:
            raise FloatingPointError("complex expectation value of a Hermitian operator")
        # <S^+> = <S^x> + i <S^y>
        out[0, s:s + chunk] = plus.real / norm
        out[1, s:s + chunk] = plus.imag / norm
        out[2, s:s + chunk] = zexp.real / norm
    return FidTrace(t=t_grid, sx=out[0], sy=out[1], sz=out[2], source="quantum")


def run_quantum(cfg: QuantumConfig, t_grid: np.ndarray | None = None) -> QuantumFidResult:
    if t_grid is None:
        t_grid = default_time_grid()
    es = prepare(cfg)
    trace = evolve_expectations(es, t_grid)
    return QuantumFidResult(trace=trace, energies=es.energies)
