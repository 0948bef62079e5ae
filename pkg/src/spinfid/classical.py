"""Classical spin dynamics: N unit vectors precessing in the static field
plus the local dipolar fields of all other spins.

In dimensionless form every spin obeys ``de/dt = e x (z + p_d H)`` in the
laboratory frame, with ``H_k = -sum_l D_kl e_l``. The rotating-frame secular
variant drops the Larmor term and keeps only the secular pair coupling.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Literal, Optional

import numpy as np

from . import _kernels
from .analysis import FidTrace
from .geometry import PairCoefficients, SpinGeometry, dipolar_tensor, secular_tensor

__all__ = [
    "ClassicalSpinState",
    "InitialDistributionSpec",
    "IntegrationControls",
    "IntegrationError",
    "ClassicalFidResult",
    "StepStats",
    "init_linear",
    "init_random",
    "initial_state",
    "perturb",
    "langevin_kappa",
    "dipolar_field",
    "rhs",
    "rhs_explicit",
    "coupling_matrix",
    "integrate",
    "integrate_rotating_secular",
]

log = logging.getLogger(__name__)

Frame = Literal["lab", "rotating_secular"]


class IntegrationError(RuntimeError):
    """Step size fell below the allowed minimum."""

    def __init__(self, message, diagnostics):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True, eq=False)
class ClassicalSpinState:
    spins: np.ndarray
    time: float = 0.0

    @property
    def n_spins(self) -> int:
        return self.spins.shape[0]

    def polarization(self) -> np.ndarray:
        return self.spins.mean(axis=0)


@dataclass(frozen=True)
class InitialDistributionSpec:
    kind: Literal["linear", "random"] = "linear"
    polarization: float = 1.0
    seed: int = 0


@dataclass(frozen=True)
class IntegrationControls:
    tol: float = 1e-8
    norm_tol: float = 1e-8
    h_min: float = 1e-12
    h0: float = 0.01
    renormalize: bool = True


@dataclass
class StepStats:
    accepted: int = 0
    rejected: int = 0
    h_min: float = math.inf
    h_max: float = 0.0
    max_norm_deviation: float = 0.0

    @staticmethod
    def new_array() -> np.ndarray:
        return np.array([0.0, 0.0, np.inf, 0.0, 0.0])

    @classmethod
    def from_array(cls, a) -> "StepStats":
        return cls(int(a[0]), int(a[1]), float(a[2]), float(a[3]), float(a[4]))

    def as_dict(self) -> dict:
        return {"accepted": self.accepted, "rejected": self.rejected,
                "h_min": self.h_min, "h_max": self.h_max,
                "max_norm_deviation": self.max_norm_deviation}


@dataclass(frozen=True, eq=False)
class ClassicalFidResult:
    trace: FidTrace
    final: ClassicalSpinState
    step_stats: StepStats
    max_norm_error: float = 0.0


# ---------------------------------------------------------------------------
# initial distributions

def _check_polarization(s):
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"polarization must lie in [-1, 1], got {s}")


def init_linear(g: SpinGeometry, s: float, seed: int = 0) -> ClassicalSpinState:
    """Spins along +x or -x; round(N(1+s)/2) of them along +x, chosen by a seeded shuffle."""
    _check_polarization(s)
    n = g.n_spins
    n_plus = int(math.floor(n * (1.0 + s) / 2.0 + 0.5))
    order = np.random.default_rng(seed).permutation(n)
    spins = np.zeros((n, 3))
    spins[:, 0] = -1.0
    spins[order[:n_plus], 0] = 1.0
    return ClassicalSpinState(spins)


def langevin_kappa(s: float, tol: float = 1e-14) -> float:
    """Concentration kappa with coth(kappa) - 1/kappa = s, by bisection (s in (-1, 1))."""
    if not -1.0 < s < 1.0:
        raise ValueError("mean projection must be strictly inside (-1, 1)")
    if s == 0.0:
        return 0.0

    def lang(k):
        if abs(k) < 1e-4:
            return k / 3.0 - k**3 / 45.0
        return 1.0 / math.tanh(k) - 1.0 / k

    target = abs(s)
    lo, hi = 0.0, 1.0
    while lang(hi) < target:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if lang(mid) < target:
            lo = mid
        else:
            hi = mid
    return math.copysign(0.5 * (lo + hi), s)


def _sample_tilted(rng, n, kappa):
    """Unit vectors with density proportional to exp(kappa * e_x)."""
    u = rng.random(n)
    if kappa == 0.0:
        w = 2.0 * u - 1.0
    else:
        # inverse CDF of the projection on the axis
        w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    w = np.clip(w, -1.0, 1.0)
    phi = 2.0 * np.pi * rng.random(n)
    rho = np.sqrt(1.0 - w * w)
    return np.column_stack([w, rho * np.cos(phi), rho * np.sin(phi)])


def init_random(g: SpinGeometry, s: float, seed: int = 0, tol: float = 1e-3,
                max_tries: int = 1_000_000) -> ClassicalSpinState:
    """Independent spins from an exponential tilt about +x with mean x-projection ``s``.

    Whole configurations are redrawn until the sample mean of e_x is within
    ``tol`` of ``s``. ``s = +-1`` falls back to the linear distribution.
    """
    _check_polarization(s)
    if abs(s) == 1.0:
        log.warning("random distribution with |s| = 1 is fully aligned; using linear init")
        return init_linear(g, s, seed)
    kappa = langevin_kappa(s)
    rng = np.random.default_rng(seed)
    n = g.n_spins
    for _ in range(max_tries):
        spins = _sample_tilted(rng, n, kappa)
        if abs(spins[:, 0].mean() - s) <= tol:
            spins /= np.linalg.norm(spins, axis=1)[:, None]
            return ClassicalSpinState(spins)
    raise RuntimeError(f"no configuration within {tol} of s={s} after {max_tries} draws")


def initial_state(g: SpinGeometry, spec: InitialDistributionSpec) -> ClassicalSpinState:
    if spec.kind == "linear":
        return init_linear(g, spec.polarization, spec.seed)
    if spec.kind == "random":
        return init_random(g, spec.polarization, spec.seed)
    raise ValueError(f"unknown initial distribution {spec.kind!r}")


def perturb(state: ClassicalSpinState, size: float, seed: int) -> ClassicalSpinState:
    """Tilt every spin by a random transverse kick of magnitude ``size``, keeping unit length."""
    rng = np.random.default_rng(seed)
    e = state.spins
    kick = rng.normal(size=e.shape)
    kick -= np.sum(kick * e, axis=1)[:, None] * e
    kick *= size / np.linalg.norm(kick, axis=1)[:, None]
    out = e + kick
    out /= np.linalg.norm(out, axis=1)[:, None]
    return ClassicalSpinState(out, state.time)


# ---------------------------------------------------------------------------
# right-hand sides

def coupling_matrix(g: SpinGeometry, secular: bool = False) -> np.ndarray:
    """(3N, 3N) block coupling matrix for the kernels."""
    D = secular_tensor(g) if secular else dipolar_tensor(g)
    return _kernels.block_matrix(D)


def dipolar_field(state: ClassicalSpinState | np.ndarray, g: SpinGeometry,
                  Dm: Optional[np.ndarray] = None) -> np.ndarray:
    """H_k = sum_{l != k} [3 r (e_l . r)/r^5 - e_l/r^3], with r = r_l - r_k."""
    e = state.spins if isinstance(state, ClassicalSpinState) else np.asarray(state, dtype=float)
    if Dm is None:
        Dm = coupling_matrix(g)
    return _kernels.field(e, Dm)


def rhs(e: np.ndarray, fields: np.ndarray, p_d: float, larmor: float = 1.0) -> np.ndarray:
    """Precession in the static plus local field: e x (larmor z + p_d H)."""
    w = p_d * np.asarray(fields, dtype=float)
    w[:, 2] += larmor
    return np.cross(e, w)


def rhs_explicit(e: np.ndarray, c: PairCoefficients, p_d: float, larmor: float = 1.0,
                 secular_only: bool = False) -> np.ndarray:
    """The same equations written with the secular (a) and non-secular (b, c) pair coefficients."""
    x, y, z = e[:, 0], e[:, 1], e[:, 2]
    a = c.a
    bx, by, cx, cy = (np.zeros_like(a),) * 4 if secular_only else (c.bx, c.by, c.cx, c.cy)
    # row i, column j; sums over j
    ax, ay, az = a @ x, a @ y, a @ z
    dx = (-(y * az + 0.5 * z * ay)
          - 2 * y * (cx @ x) + 2 * y * (cy @ y) - 2 * z * (cy @ z)
          - 2 * z * ((bx @ y) + (by @ x)))
    dy = ((x * az + 0.5 * z * ax)
          + 2 * x * (cx @ x) - 2 * z * (cx @ z) - 2 * x * (cy @ y)
          - 2 * z * ((bx @ x) - (by @ y)))
    dz = (0.5 * (x * ay - y * ax)
          + 2 * (y * (cx @ z) + x * (cy @ z))
          + 2 * (x * (bx @ y) + y * (bx @ x))
          + 2 * (x * (by @ x) - y * (by @ y)))
    out = p_d * np.column_stack([dx, dy, dz])
    out[:, 0] += larmor * y
    out[:, 1] -= larmor * x
    return out


# ---------------------------------------------------------------------------
# integration

def _drive(y, n, Dm, p_d, larmor, tangent, t_from, t_stop, h, ctl: IntegrationControls, stats):
    y, t, h, status = _kernels.advance(y, t_from, t_stop, h, n, Dm, p_d, larmor, tangent,
                                       ctl.tol, ctl.norm_tol, ctl.h_min, ctl.renormalize, stats)
    if status != _kernels.STATUS_OK:
        diag = {"t": float(t), "h": float(h), **StepStats.from_array(stats).as_dict()}
        raise IntegrationError("step size underflow", diag)
    return y, t, h


def _run(state: ClassicalSpinState, Dm, p_d, larmor, t_end, dt_out, ctl, source):
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    n = state.n_spins
    m = int(round(t_end / dt_out))
    t_grid = state.time + np.arange(m + 1) * dt_out
    samples = np.empty((m + 1, 3))
    y = np.ascontiguousarray(state.spins, dtype=float).reshape(-1).copy()
    samples[0] = state.spins.mean(axis=0)
    stats = StepStats.new_array()
    h = ctl.h0
    t = state.time
    max_norm_err = 0.0
    for i in range(1, m + 1):
        y, t, h = _drive(y, n, Dm, p_d, larmor, False, t, t_grid[i], h, ctl, stats)
        e = y.reshape(n, 3)
        samples[i] = e.mean(axis=0)
        if not ctl.renormalize:
            max_norm_err = max(max_norm_err, float(np.max(np.abs(np.linalg.norm(e, axis=1) - 1))))
    trace = FidTrace(t=t_grid, sx=samples[:, 0].copy(), sy=samples[:, 1].copy(),
                     sz=samples[:, 2].copy(), source=source)
    final = ClassicalSpinState(y.reshape(n, 3).copy(), float(t_grid[-1]))
    return ClassicalFidResult(trace=trace, final=final, step_stats=StepStats.from_array(stats),
                              max_norm_error=max_norm_err)


def integrate(state: ClassicalSpinState, g: SpinGeometry, p_d: float, t_end: float,
              dt_out: float = 0.5, controls: IntegrationControls = IntegrationControls(),
              secular_only: bool = False) -> ClassicalFidResult:
    """Laboratory-frame trajectory sampled every ``dt_out``.

    Steps are aligned with the output grid, so samples are exact step
    endpoints rather than interpolants.
    """
    Dm = coupling_matrix(g, secular=secular_only)
    return _run(state, Dm, p_d, 1.0, t_end, dt_out, controls, "classical")


def integrate_rotating_secular(state: ClassicalSpinState, g: SpinGeometry, p_d: float,
                               t_end: float, dt_out: float = 0.5,
                               controls: IntegrationControls = IntegrationControls()
                               ) -> ClassicalFidResult:
    """Secular dynamics in the frame rotating at the Larmor frequency."""
    Dm = coupling_matrix(g, secular=True)
    return _run(state, Dm, p_d, 0.0, t_end, dt_out, controls, "classical-rotating")
