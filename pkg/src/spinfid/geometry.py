"""Spin site configurations and the pairwise dipolar data shared by both engines.

Positions are integer lattice nodes in units of the lattice step. Everything
that depends only on positions (separation vectors, the 3x3 dipolar tensors
and the secular/non-secular pair coefficients) is computed once here and
stored densely, since every pair is coupled.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "SpinGeometry",
    "PairCoefficients",
    "build_cubic",
    "build_explicit",
    "dipolar_tensor",
    "secular_tensor",
    "pair_coefficients",
    "CLUSTER_COORDS",
    "cluster_geometry",
]


# Nested cluster geometries used for the small quantum runs (5, 7, 10, 12 spins).
CLUSTER_COORDS: tuple[tuple[int, int, int], ...] = (
    (0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (0, 1, 1),
    (1, 0, 1), (1, 1, 0),
    (1, 1, 1), (0, 0, -1), (0, -1, 0),
    (-1, 0, 0), (-1, 0, -1),
)


@dataclass(frozen=True, eq=False)
class SpinGeometry:
    """Immutable set of lattice sites.

    ``pair_vectors[k, l]`` is ``r_l - r_k`` and ``pair_distances[k, l]`` its
    length; the diagonal is zero.
    """

    sites: np.ndarray
    pair_vectors: np.ndarray = field(repr=False)
    pair_distances: np.ndarray = field(repr=False)

    @property
    def n_spins(self) -> int:
        return self.sites.shape[0]

    def __len__(self) -> int:
        return self.n_spins

    def describe(self) -> dict:
        return {"coords": self.sites.astype(int).tolist()}

    @cached_property
    def tensor(self) -> np.ndarray:
        return dipolar_tensor(self)

    @cached_property
    def coefficients(self) -> "PairCoefficients":
        return pair_coefficients(self)


@dataclass(frozen=True, eq=False)
class PairCoefficients:
    """Coefficients of the explicit classical equations, one N x N array each.

    ``a`` is the secular coupling; ``bx, by, cx, cy`` the non-secular ones.
    Diagonals are zero so sums over ``j`` may include ``j == i``.
    """

    a: np.ndarray
    bx: np.ndarray
    by: np.ndarray
    cx: np.ndarray
    cy: np.ndarray


def _from_sites(sites: np.ndarray) -> SpinGeometry:
    sites = np.asarray(sites, dtype=float)
    if sites.ndim != 2 or sites.shape[1] != 3 or sites.shape[0] == 0:
        raise ValueError("sites must be a non-empty (N, 3) array")
    rvec = sites[None, :, :] - sites[:, None, :]
    dist = np.sqrt(np.einsum("kla,kla->kl", rvec, rvec))
    off = ~np.eye(len(sites), dtype=bool)
    if np.any(dist[off] == 0.0):
        raise ValueError("coincident sites in geometry")
    for arr in (sites, rvec, dist):
        arr.setflags(write=False)
    return SpinGeometry(sites=sites, pair_vectors=rvec, pair_distances=dist)


def build_cubic(nx: int, ny: int, nz: int) -> SpinGeometry:
    """Sites of an ``nx x ny x nz`` block of the simple cubic lattice, x fastest."""
    dims = (nx, ny, nz)
    if any(int(d) != d or d < 1 for d in dims):
        raise ValueError(f"lattice dimensions must be positive integers, got {dims}")
    z, y, x = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    sites = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    return _from_sites(sites)


def build_explicit(coords: Sequence[Sequence[int]]) -> SpinGeometry:
    """Sites at the given integer coordinates, in the given order."""
    arr = np.asarray(coords)
    if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
        raise ValueError("coords must be a non-empty list of 3-vectors")
    if not np.all(np.equal(np.round(arr), arr)):
        raise ValueError("coords must be integer lattice nodes")
    if len({tuple(c) for c in arr.astype(int).tolist()}) != len(arr):
        raise ValueError("duplicate coordinates in geometry")
    return _from_sites(arr.astype(float))


def cluster_geometry(n_spins: int) -> SpinGeometry:
    """The nested 5/7/10/12-spin clusters (first ``n_spins`` of CLUSTER_COORDS)."""
    if n_spins not in (5, 7, 10, 12):
        raise ValueError("cluster sizes are 5, 7, 10 or 12")
    return build_explicit(CLUSTER_COORDS[:n_spins])


def dipolar_tensor(g: SpinGeometry) -> np.ndarray:
    """Pair tensors ``D[k, l] = I/r^3 - 3 r r^T / r^5``, shape (N, N, 3, 3).

    ``D[k, k]`` is zero.
    """
    n = g.n_spins
    r = g.pair_distances.copy()
    np.fill_diagonal(r, 1.0)
    rv = g.pair_vectors
    inv3 = 1.0 / r**3
    inv5 = 1.0 / r**5
    D = np.eye(3)[None, None, :, :] * inv3[:, :, None, None]
    D = D - 3.0 * rv[:, :, :, None] * rv[:, :, None, :] * inv5[:, :, None, None]
    D[np.arange(n), np.arange(n)] = 0.0
    return D


def secular_tensor(g: SpinGeometry) -> np.ndarray:
    """Secular part of the pair tensors: ``a * diag(-1/2, -1/2, 1)``."""
    a = pair_coefficients(g).a
    return a[:, :, None, None] * np.diag([-0.5, -0.5, 1.0])[None, None]


def pair_coefficients(g: SpinGeometry) -> PairCoefficients:
    """Secular and non-secular pair coefficients of the explicit equations."""
    r = g.pair_distances.copy()
    np.fill_diagonal(r, np.inf)
    dx, dy, dz = (g.pair_vectors[:, :, i] for i in range(3))
    r2 = r * r
    r3 = r2 * r
    r5 = r3 * r2
    a = (1.0 - 3.0 * dz * dz / r2) / r3
    bx = -0.75 * (dx * dx - dy * dy) / r5
    by = 1.5 * dx * dy / r5
    cx = -1.5 * dx * dz / r5
    cy = 1.5 * dy * dz / r5
    return PairCoefficients(a=a, bx=bx, by=by, cx=cx, cy=cy)
