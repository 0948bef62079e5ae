"""Maximum Lyapunov exponent of the classical spin dynamics.

A disturbance f is integrated with the exact linearization of the equations
of motion alongside the trajectory. It is rescaled to unit norm at fixed
intervals (its growth over 10^4-10^5 time units overflows otherwise) and the
logarithms of the rescale factors are accumulated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .classical import (ClassicalSpinState, IntegrationControls, IntegrationError, StepStats,
                        coupling_matrix)
from .geometry import PairCoefficients, SpinGeometry

__all__ = [
    "TangentState",
    "LyapunovSeries",
    "NumericalFailure",
    "tangent_rhs",
    "tangent_rhs_explicit",
    "random_tangent",
    "lyapunov",
]


_RESCALE, _SAMPLE, _REFERENCE = 1, 2, 4


class NumericalFailure(RuntimeError):
    pass


@dataclass
class TangentState:
    disturbances: np.ndarray
    accumulated_log_norm: float = 0.0
    last_rescale_time: float = 0.0

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.disturbances**2)))

    def rescale(self, t: float) -> float:
        nrm = self.norm()
        if not np.isfinite(nrm) or nrm == 0.0:
            raise NumericalFailure(f"tangent norm {nrm} at t={t}")
        self.disturbances = self.disturbances / nrm
        self.accumulated_log_norm += float(np.log(nrm))
        self.last_rescale_time = t
        return nrm


@dataclass(frozen=True, eq=False)
class LyapunovSeries:
    t: np.ndarray
    L: np.ndarray
    T: float
    rescale_interval: float
    log_growth: np.ndarray = field(repr=False)
    step_stats: Optional[StepStats] = None

    @property
    def L_inf_estimate(self) -> float:
        return float(self.L[-1])

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.t, self.L]), delimiter=",", header="t,L",
                   comments="", fmt="%.17g")


def tangent_rhs(e: np.ndarray, f: np.ndarray, g: SpinGeometry, p_d: float,
                larmor: float = 1.0, Dm: Optional[np.ndarray] = None) -> np.ndarray:
    """df/dt = f x (larmor z + p_d H[e]) + p_d e x H[f]."""
    if Dm is None:
        Dm = coupling_matrix(g)
    return _kernels.tangent_rhs(e, f, Dm, p_d, larmor)


def tangent_rhs_explicit(e: np.ndarray, f: np.ndarray, c: PairCoefficients, p_d: float,
                         larmor: float = 1.0) -> np.ndarray:
    """Linearized equations in the pair-coefficient form, term by term."""
    x, y, z = e[:, 0], e[:, 1], e[:, 2]
    u, v, w = f[:, 0], f[:, 1], f[:, 2]
    a, bx, by, cx, cy = c.a, c.bx, c.by, c.cx, c.cy
    dx = (-(y * (a @ w) + (a @ z) * v + 0.5 * (z * (a @ v) + (a @ y) * w))
          - 2 * (y * (cx @ u) + (cx @ x) * v)
          + 2 * (y * (cy @ v) + (cy @ y) * v - z * (cy @ w) - (cy @ z) * w)
          - 2 * z * ((bx @ v) + (by @ u))
          - 2 * ((bx @ y) + (by @ x)) * w)
    dy = ((x * (a @ w) + (a @ z) * u + 0.5 * (z * (a @ u) + (a @ x) * w))
          + 2 * (x * (cx @ u) + (cx @ x) * u - z * (cx @ w) - (cx @ z) * w)
          - 2 * (x * (cy @ v) + (cy @ y) * u)
          - 2 * z * ((bx @ u) - (by @ v))
          - 2 * ((bx @ x) - (by @ y)) * w)
    dz = (0.5 * (x * (a @ v) + (a @ y) * u - y * (a @ u) - (a @ x) * v)
          + 2 * ((cx @ z) * v + (cy @ z) * u)
          + 2 * (y * (cx @ w) + x * (cy @ w))
          + 2 * (x * (bx @ v) + (bx @ y) * u + y * (bx @ u) + (bx @ x) * v)
          + 2 * (x * (by @ u) + (by @ x) * u - y * (by @ v) - (by @ y) * v))
    out = p_d * np.column_stack([dx, dy, dz])
    out[:, 0] += larmor * v
    out[:, 1] -= larmor * u
    return out


def random_tangent(n: int, seed: int) -> np.ndarray:
    """Unit-norm random disturbance of N 3-vectors."""
    f = np.random.default_rng(seed).normal(size=(n, 3))
    return f / np.sqrt(np.sum(f**2))


def lyapunov(state: ClassicalSpinState, g: SpinGeometry, p_d: float, t_end: float,
             T: float = 1000.0, rescale_interval: float = 10.0, sample_interval: float = 100.0,
             f0: Optional[np.ndarray] = None, seed: int = 0,
             controls: IntegrationControls = IntegrationControls(),
             secular_only: bool = False) -> LyapunovSeries:
    """Finite-time exponent L(t) = ln(|f(t)| / |f(T)|) / (t - T) sampled for t > T.

    The first ``T`` time units are integrated but not used. ``f0`` defaults to
    a random unit disturbance drawn from ``seed``.
    """
    if not t_end > T:
        raise ValueError("t_end must exceed the transient cutoff T")
    if rescale_interval <= 0 or sample_interval <= 0:
        raise ValueError("intervals must be positive")
    n = g.n_spins
    Dm = coupling_matrix(g, secular=secular_only)
    tan = TangentState(random_tangent(n, seed) if f0 is None else np.array(f0, dtype=float))
    y = np.concatenate([state.spins.reshape(-1), tan.disturbances.reshape(-1)])
    t0 = state.time
    events: dict[float, int] = {}

    def mark(te, flag):
        key = round(te, 9)
        events[key] = events.get(key, 0) | flag

    n_rescale = int(np.floor((t_end - t0) / rescale_interval + 1e-9))
    n_sample = int(np.floor((t_end - t0 - T) / sample_interval + 1e-9))
    for k in range(1, n_rescale + 1):
        mark(t0 + k * rescale_interval, _RESCALE)
    for k in range(1, n_sample + 1):
        mark(t0 + T + k * sample_interval, _SAMPLE)
    mark(t0 + T, _REFERENCE)
    mark(t_end, _SAMPLE)
    times, Ls, growth = [], [], []
    ref = None
    stats = StepStats.new_array()
    h = controls.h0
    t = t0
    ctl = controls
    for te in sorted(events):
        y, t_new, h, status = _kernels.advance(y, t, te, h, n, Dm, p_d, 1.0, True, ctl.tol,
                                               ctl.norm_tol, ctl.h_min, ctl.renormalize, stats)
        if status != _kernels.STATUS_OK:
            raise IntegrationError("step size underflow",
                                   {"t": float(t_new), "h": float(h), **StepStats.from_array(stats).as_dict()})
        t = te
        tan.disturbances = y[3 * n:].reshape(n, 3)
        log_now = tan.accumulated_log_norm + float(np.log(tan.norm()))
        if not np.isfinite(log_now):
            raise NumericalFailure(f"tangent norm not finite at t={t}")
        kind = events[te]
        if kind & _REFERENCE:
            ref = log_now
        if kind & _SAMPLE and ref is not None and t > t0 + T and t not in times:
            times.append(t)
            growth.append(log_now - ref)
            Ls.append((log_now - ref) / (t - t0 - T))
        if kind & _RESCALE:
            tan.rescale(t)
            y[3 * n:] = tan.disturbances.reshape(-1)
    return LyapunovSeries(t=np.array(times), L=np.array(Ls), T=T, rescale_interval=rescale_interval,
                          log_growth=np.array(growth), step_stats=StepStats.from_array(stats))
