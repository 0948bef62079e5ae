"""Spectral and envelope analysis of FID traces."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

__all__ = [
    "FidTrace",
    "Spectrum",
    "AbragamFit",
    "FitFailure",
    "dft",
    "idft",
    "spectrum",
    "envelope",
    "demodulate",
    "first_zero",
    "abragam",
    "fit_abragam",
    "spectral_width",
    "peak_frequencies",
    "compare",
]

# Fraction of the initial amplitude; finite classical systems keep a few percent
# of residual transverse polarization at the first envelope minimum.
ZERO_THRESHOLD = 0.2


@dataclass(frozen=True, eq=False)
class FidTrace:
    """Mean transverse/longitudinal polarization on a uniform time grid."""

    t: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    source: str = "unknown"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.sx) == len(self.sy) == len(self.sz) == n):
            raise ValueError("trace components must have equal length")
        if n > 2:
            steps = np.diff(self.t)
            if np.max(np.abs(steps - steps[0])) > 1e-12 * max(1.0, abs(self.t[-1])):
                raise ValueError("trace time grid is not uniform")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def to_csv(self, path, header=("t", "sx", "sy", "sz")) -> None:
        data = np.column_stack([self.t, self.sx, self.sy, self.sz])
        np.savetxt(path, data, delimiter=",", header=",".join(header), comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, source="unknown") -> "FidTrace":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(t=data[:, 0], sx=data[:, 1], sy=data[:, 2], sz=data[:, 3], source=source)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """DFT of a uniformly sampled signal.

    ``omega[k] = 2 pi k / (M dt)`` for the (possibly zero-padded) length M.
    """

    omega: np.ndarray
    X: np.ndarray
    dt: float
    n_samples: int

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.X)

    @property
    def resolution(self) -> float:
        return 2 * np.pi / (len(self.X) * self.dt)

    def to_csv(self, path) -> None:
        data = np.column_stack([self.omega, self.X.real, self.X.imag, np.abs(self.X)])
        np.savetxt(path, data, delimiter=",", header="omega,re,im,abs", comments="", fmt="%.17g")


def dft(x) -> np.ndarray:
    """X_k = sum_n x_n exp(-2 pi i k n / M), no normalization."""
    x = np.asarray(x)
    if x.size < 2:
        raise ValueError("need at least two samples")
    return np.fft.fft(x)


def idft(X) -> np.ndarray:
    """x_n = (1/M) sum_k X_k exp(2 pi i k n / M)."""
    return np.fft.ifft(np.asarray(X))


def spectrum(x, dt: float, resolution: Optional[float] = None) -> Spectrum:
    """DFT of ``x`` with frequencies in angular units.

    If ``resolution`` is given the signal is zero-padded so the frequency
    step is at most that value.
    """
    x = np.asarray(x)
    m = x.size
    if resolution is not None:
        m = max(m, int(np.ceil(2 * np.pi / (resolution * dt))))
        x = np.concatenate([x, np.zeros(m - x.size, dtype=x.dtype)])
    X = dft(x)
    omega = 2 * np.pi * np.arange(m) / (m * dt)
    return Spectrum(omega=omega, X=X, dt=dt, n_samples=x.size)


def envelope(trace: FidTrace) -> np.ndarray:
    """Amplitude of the complex transverse polarization, |sx + i sy|."""
    return np.hypot(trace.sx, trace.sy)


def demodulate(trace: FidTrace, omega0: float = 1.0) -> np.ndarray:
    """Transverse polarization in the frame rotating at ``omega0``.

    Free precession gives ``sx + i sy = G(t) exp(-i omega0 t)``; the real part
    of G is a signed envelope that changes sign where the amplitude vanishes.
    """
    return (trace.sx + 1j * trace.sy) * np.exp(1j * omega0 * trace.t)


def first_zero(t, amp, threshold: float = ZERO_THRESHOLD) -> Optional[float]:
    """First time the amplitude drops below ``threshold`` times its initial value.

    The location is refined to the minimum of a parabola through the squared
    amplitude at the three samples around the first local minimum after the
    crossing. Returns None if the amplitude never drops below the threshold.
    """
    t = np.asarray(t, dtype=float)
    amp = np.abs(np.asarray(amp, dtype=float))
    if amp[0] == 0:
        raise ValueError("initial amplitude is zero")
    below = np.flatnonzero(amp < threshold * amp[0])
    if below.size == 0:
        return None
    i = below[0]
    while i + 1 < amp.size and amp[i + 1] < amp[i]:
        i += 1
    if i == 0 or i == amp.size - 1:
        return float(t[i])
    y0, y1, y2 = amp[i - 1] ** 2, amp[i] ** 2, amp[i + 1] ** 2
    denom = y0 - 2 * y1 + y2
    if denom <= 0:
        return float(t[i])
    shift = 0.5 * (y0 - y2) / denom
    return float(t[i] + shift * (t[i + 1] - t[i]))


def abragam(t, A, a, b):
    """A exp(-a^2 t^2 / 2) sin(b t) / (b t)."""
    t = np.asarray(t, dtype=float)
    return A * np.exp(-0.5 * (a * t) ** 2) * np.sinc(b * t / np.pi)


class FitFailure(RuntimeError):
    def __init__(self, message, best):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class AbragamFit:
    A: float
    a: float
    b: float
    residual: float
    window: tuple[float, float]
    magnitude: bool

    def as_dict(self) -> dict:
        return {"A": self.A, "a": self.a, "b": self.b, "residual": self.residual,
                "window": list(self.window), "magnitude": self.magnitude}


def fit_abragam(t, y, window: Optional[tuple[float, float]] = None, t_star: Optional[float] = None,
                magnitude: bool = False, max_iter: int = 20000) -> AbragamFit:
    """Least-squares fit of the Abragam trial function by Nelder-Mead.

    With ``magnitude=True`` the absolute value of the model is fitted, for
    data that is an unsigned amplitude. The default window is [0, 2 t*]; the
    start point is A = y(0), b = pi/(2 t*), a = 1/(2 t*).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if t_star is None:
        t_star = first_zero(t, y)
        if t_star is None:
            raise ValueError("no zero in data; pass t_star or window explicitly")
    if window is None:
        window = (0.0, 2.0 * t_star)
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12 or hi <= lo:
        raise ValueError(f"fit window {window} outside trace span [{t[0]}, {t[-1]}]")
    sel = (t >= lo) & (t <= hi)
    tw, yw = t[sel], y[sel]

    def model(p):
        f = abragam(tw, p[0], p[1], p[2])
        return np.abs(f) if magnitude else f

    def cost(p):
        return np.mean((model(p) - yw) ** 2)

    x0 = np.array([y[0], 1.0 / (2 * t_star), np.pi / (2 * t_star)])
    opts = {"xatol": 1e-13, "fatol": 1e-30, "maxiter": max_iter, "maxfev": 4 * max_iter}
    res = minimize(cost, x0, method="Nelder-Mead", options=opts)
    # restart from the optimum to escape simplex collapse
    for _ in range(3):
        res2 = minimize(cost, res.x, method="Nelder-Mead", options=opts)
        done = res2.fun >= res.fun
        res = res2 if res2.fun <= res.fun else res
        if done:
            break
    A, a, b = res.x
    fit = AbragamFit(A=float(A), a=float(abs(a)), b=float(abs(b)), residual=float(np.sqrt(res.fun)),
                     window=(float(lo), float(hi)), magnitude=magnitude)
    if not res.success and res.nit >= max_iter:
        raise FitFailure("Abragam fit did not converge", fit)
    return fit


def _near_larmor(spec: Spectrum, omega0: float, half_band: float):
    sel = (spec.omega > omega0 - half_band) & (spec.omega < omega0 + half_band)
    return spec.omega[sel], spec.modulus[sel]


def spectral_width(spec: Spectrum, omega0: float = 1.0, half_band: float = 0.2) -> float:
    """Full width between the outermost half-maximum points of |X| near ``omega0``.

    Crossings are located by linear interpolation. For a doublet this spans
    both peaks.
    """
    w, m = _near_larmor(spec, omega0, half_band)
    half = 0.5 * m.max()
    above = np.flatnonzero(m >= half)
    i, j = above[0], above[-1]
    lo = w[i] if i == 0 else w[i - 1] + (half - m[i - 1]) / (m[i] - m[i - 1]) * (w[i] - w[i - 1])
    hi = w[j] if j == m.size - 1 else w[j] + (m[j] - half) / (m[j] - m[j + 1]) * (w[j + 1] - w[j])
    return float(hi - lo)


def peak_frequencies(spec: Spectrum, omega0: float = 1.0, half_band: float = 0.2):
    """The highest local maximum of |X| on each side of ``omega0``.

    Returns ((omega_left, height_left), (omega_right, height_right)).
    """
    w, m = _near_larmor(spec, omega0, half_band)
    interior = np.flatnonzero((m[1:-1] > m[:-2]) & (m[1:-1] >= m[2:])) + 1
    left = [i for i in interior if w[i] < omega0]
    right = [i for i in interior if w[i] > omega0]
    if not left or not right:
        raise ValueError("no peaks on both sides of the carrier")
    il = max(left, key=lambda i: m[i])
    ir = max(right, key=lambda i: m[i])
    return (float(w[il]), float(m[il])), (float(w[ir]), float(m[ir]))


def _resample(src: FidTrace, t: np.ndarray) -> np.ndarray:
    return np.interp(t, src.t, src.sx)


def compare(a: FidTrace, b: FidTrace, t_star: Optional[float] = None,
            resolution: Optional[float] = None) -> dict:
    """Divergence report between two traces on their common time span.

    ``b`` is linearly interpolated onto ``a``'s grid if the grids differ.
    Differences in the x-component are summarized before and after ``t_star``
    (by default the first zero of ``a``'s envelope).
    """
    lo = max(a.t[0], b.t[0])
    hi = min(a.t[-1], b.t[-1])
    if hi <= lo:
        raise ValueError("traces have disjoint time ranges")
    sel = (a.t >= lo) & (a.t <= hi)
    t = a.t[sel]
    xa = a.sx[sel]
    same_grid = len(a.t) == len(b.t) and np.array_equal(a.t, b.t)
    xb = b.sx[sel] if same_grid else _resample(b, t)
    if t_star is None:
        t_star = first_zero(a.t, envelope(a))
    split = t_star if t_star is not None else t[-1]
    diff = np.abs(xa - xb)
    early = diff[t <= split]
    late = diff[t > split]

    def stats(d):
        if d.size == 0:
            return {"max": 0.0, "rms": 0.0}
        return {"max": float(d.max()), "rms": float(np.sqrt(np.mean(d**2)))}

    dt = t[1] - t[0]
    wa = spectral_width(spectrum(xa, dt, resolution))
    wb = spectral_width(spectrum(xb, dt, resolution))
    return {
        "t_star": None if t_star is None else float(t_star),
        "t_range": [float(t[0]), float(t[-1])],
        "before_t_star": stats(early),
        "after_t_star": stats(late),
        "width_a": wa,
        "width_b": wb,
        "width_difference": wa - wb,
    }
