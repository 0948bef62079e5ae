"""Hot numeric kernels for the classical engine.

Two interchangeable back ends are provided: numba-compiled loops and plain
numpy. The numba path is used when numba imports and the environment variable
``SPINFID_DISABLE_NUMBA`` is unset (or ``0``). Both paths run the same
Dormand-Prince stepping logic; they differ only in how the right-hand side is
evaluated, so results agree to rounding.

State layout: a flat float64 vector holding N spin 3-vectors, optionally
followed by N tangent 3-vectors. The coupling matrix ``Dm`` is the (3N, 3N)
block form of the pair tensors, ``Dm[3k+a, 3l+b] = D[k, l, a, b]``.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

__all__ = ["USE_NUMBA", "block_matrix", "field", "spin_rhs", "tangent_rhs", "advance", "backend"]

USE_NUMBA = numba is not None and os.environ.get("SPINFID_DISABLE_NUMBA", "0") in ("", "0")

# Dormand-Prince 5(4) tableau.
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between 5th and embedded 4th order weights
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40

STATUS_OK = 0
STATUS_UNDERFLOW = 1


def block_matrix(D: np.ndarray) -> np.ndarray:
    """Reshape (N, N, 3, 3) pair tensors into the (3N, 3N) coupling matrix."""
    n = D.shape[0]
    return np.ascontiguousarray(D.transpose(0, 2, 1, 3).reshape(3 * n, 3 * n))


# --------------------------------------------------------------------------
# numpy back end

def _field_np(e, Dm):
    return -(Dm @ e.reshape(-1)).reshape(-1, 3)


def _precess_np(e, H, p_d, larmor):
    w = p_d * H
    w[:, 2] += larmor
    return np.cross(e, w)


def _deriv_np(y, n, Dm, p_d, larmor, tangent):
    e = y[: 3 * n].reshape(n, 3)
    out = np.empty_like(y)
    He = _field_np(e, Dm)
    out[: 3 * n] = _precess_np(e, He, p_d, larmor).reshape(-1)
    if tangent:
        f = y[3 * n:].reshape(n, 3)
        Hf = _field_np(f, Dm)
        df = _precess_np(f, He, p_d, larmor) + p_d * np.cross(e, Hf)
        out[3 * n:] = df.reshape(-1)
    return out


# --------------------------------------------------------------------------
# numba back end: serial loops, ascending source index in every field sum

def _field_loop(v, Dm, n, out):
    for k in range(n):
        hx = 0.0
        hy = 0.0
        hz = 0.0
        r0 = 3 * k
        for l in range(n):
            if l == k:
                continue
            c0 = 3 * l
            vx = v[c0]
            vy = v[c0 + 1]
            vz = v[c0 + 2]
            hx -= Dm[r0, c0] * vx + Dm[r0, c0 + 1] * vy + Dm[r0, c0 + 2] * vz
            hy -= Dm[r0 + 1, c0] * vx + Dm[r0 + 1, c0 + 1] * vy + Dm[r0 + 1, c0 + 2] * vz
            hz -= Dm[r0 + 2, c0] * vx + Dm[r0 + 2, c0 + 1] * vy + Dm[r0 + 2, c0 + 2] * vz
        out[r0] = hx
        out[r0 + 1] = hy
        out[r0 + 2] = hz


def _deriv_loop(y, n, Dm, p_d, larmor, tangent):
    out = np.empty_like(y)
    He = np.empty(3 * n)
    _field_loop(y[: 3 * n], Dm, n, He)
    for k in range(n):
        i = 3 * k
        ex, ey, ez = y[i], y[i + 1], y[i + 2]
        wx = p_d * He[i]
        wy = p_d * He[i + 1]
        wz = p_d * He[i + 2] + larmor
        out[i] = ey * wz - ez * wy
        out[i + 1] = ez * wx - ex * wz
        out[i + 2] = ex * wy - ey * wx
    if tangent:
        Hf = np.empty(3 * n)
        _field_loop(y[3 * n:], Dm, n, Hf)
        for k in range(n):
            i = 3 * k
            j = 3 * n + i
            ex, ey, ez = y[i], y[i + 1], y[i + 2]
            fx, fy, fz = y[j], y[j + 1], y[j + 2]
            wx = p_d * He[i]
            wy = p_d * He[i + 1]
            wz = p_d * He[i + 2] + larmor
            gx = p_d * Hf[i]
            gy = p_d * Hf[i + 1]
            gz = p_d * Hf[i + 2]
            out[j] = fy * wz - fz * wy + ey * gz - ez * gy
            out[j + 1] = fz * wx - fx * wz + ez * gx - ex * gz
            out[j + 2] = fx * wy - fy * wx + ex * gy - ey * gx
    return out


# --------------------------------------------------------------------------
# adaptive stepper, shared by both back ends

def _make_advance(deriv):
    def advance(y, t, t_stop, h, n, Dm, p_d, larmor, tangent, tol, norm_tol, h_min, renorm, stats):
        """Advance ``y`` from ``t`` to exactly ``t_stop``.

        A step is accepted only if the embedded error estimate passes and
        every spin length stays within ``norm_tol`` of one; otherwise the step
        is retried with a smaller size (halved for the length check). With
        ``renorm`` set, spins are projected back to unit length after each
        accepted step.

        ``stats`` accumulates [accepted, rejected, min h, max h, max length
        deviation of an accepted step before any renormalization].
        Returns (y, t, h_next, status).
        """
        k1 = deriv(y, n, Dm, p_d, larmor, tangent)
        while t < t_stop:
            remaining = t_stop - t
            last = h >= remaining
            hs = remaining if last else h
            if hs < h_min:
                if last:
                    hs = remaining
                else:
                    return y, t, h, STATUS_UNDERFLOW
            k2 = deriv(y + hs * (A21 * k1), n, Dm, p_d, larmor, tangent)
            k3 = deriv(y + hs * (A31 * k1 + A32 * k2), n, Dm, p_d, larmor, tangent)
            k4 = deriv(y + hs * (A41 * k1 + A42 * k2 + A43 * k3), n, Dm, p_d, larmor, tangent)
            k5 = deriv(y + hs * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), n, Dm, p_d, larmor, tangent)
            k6 = deriv(y + hs * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5),
                       n, Dm, p_d, larmor, tangent)
            y_new = y + hs * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
            k7 = deriv(y_new, n, Dm, p_d, larmor, tangent)
            err_vec = hs * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
            # absolute per-component bound: the state is made of unit vectors
            err = np.max(np.abs(err_vec)) / tol
            if not err <= 1.0:
                stats[1] += 1
                fac = 0.9 * err ** -0.2 if err > 0 else 0.2
                h = hs * max(0.2, fac)
                continue
            spins = y_new[: 3 * n].reshape(n, 3)
            lengths = np.sqrt(np.sum(spins * spins, axis=1))
            dev = np.max(np.abs(lengths - 1.0))
            if dev > norm_tol:
                stats[1] += 1
                h = 0.5 * hs
                continue
            if renorm:
                for k in range(n):
                    spins[k] /= lengths[k]
            y = y_new
            t = t_stop if last else t + hs
            stats[0] += 1
            if hs < stats[2]:
                stats[2] = hs
            if hs > stats[3]:
                stats[3] = hs
            if dev > stats[4]:
                stats[4] = dev
            fac = 0.9 * err ** -0.2 if err > 0 else 5.0
            h_next = hs * min(5.0, max(0.2, fac))
            if not last or h_next < h:
                h = h_next
            k1 = deriv(y, n, Dm, p_d, larmor, tangent)
        return y, t, h, STATUS_OK

    return advance


_advance_np = _make_advance(_deriv_np)

if numba is not None:
    _field_loop_nb = numba.njit(cache=True)(_field_loop)
    _field_loop = _field_loop_nb  # rebinding lets _deriv_loop resolve the compiled version
    _deriv_nb = numba.njit(cache=True)(_deriv_loop)
    _advance_nb = numba.njit(_make_advance(_deriv_nb))
else:  # pragma: no cover
    _deriv_nb = None
    _advance_nb = None


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def _deriv(y, n, Dm, p_d, larmor, tangent):
    if USE_NUMBA:
        return _deriv_nb(y, n, Dm, float(p_d), float(larmor), bool(tangent))
    return _deriv_np(y, n, Dm, p_d, larmor, tangent)


def field(e: np.ndarray, Dm: np.ndarray) -> np.ndarray:
    """Dimensionless dipolar field at every site, shape (N, 3)."""
    e = np.ascontiguousarray(e, dtype=float)
    if USE_NUMBA:
        out = np.empty(e.size)
        _field_loop_nb(e.reshape(-1), Dm, e.shape[0], out)
        return out.reshape(-1, 3)
    return _field_np(e, Dm)


def spin_rhs(e: np.ndarray, Dm: np.ndarray, p_d: float, larmor: float = 1.0) -> np.ndarray:
    """Time derivative of the spin directions, ``e x (larmor z + p_d H)``."""
    e = np.ascontiguousarray(e, dtype=float)
    n = e.shape[0]
    return _deriv(e.reshape(-1), n, Dm, p_d, larmor, False).reshape(n, 3)


def tangent_rhs(e: np.ndarray, f: np.ndarray, Dm: np.ndarray, p_d: float,
                larmor: float = 1.0) -> np.ndarray:
    """Linearized equations for a disturbance ``f`` about the state ``e``."""
    e = np.ascontiguousarray(e, dtype=float)
    n = e.shape[0]
    y = np.concatenate([e.reshape(-1), np.asarray(f, dtype=float).reshape(-1)])
    return _deriv(y, n, Dm, p_d, larmor, True)[3 * n:].reshape(n, 3)


def advance(y, t, t_stop, h, n, Dm, p_d, larmor, tangent, tol, norm_tol, h_min, renorm, stats):
    """Dispatch to the compiled or the numpy stepper (see ``_make_advance``)."""
    if USE_NUMBA:
        return _advance_nb(y, float(t), float(t_stop), float(h), n, Dm, float(p_d),
                           float(larmor), bool(tangent), float(tol), float(norm_tol),
                           float(h_min), bool(renorm), stats)
    return _advance_np(y, t, t_stop, h, n, Dm, p_d, larmor, tangent, tol, norm_tol, h_min, renorm,
                       stats)
