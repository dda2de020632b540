"""Discretisation of the sphere and geometry of convex bodies from support functions.

Two grids are supported:

* ``n = 2``: uniform periodic nodes ``theta_i = 2 pi i / N`` on the circle.
* ``n = 3``: axisymmetric bodies, cell-centred polar angles
  ``theta_j = (j + 1/2) pi / N`` (poles excluded).  Ghost values are
  obtained by reflection, since a smooth axisymmetric function is even in
  theta about both poles.

Derivatives use fourth-order central differences written in difference
form, so constants are differentiated to exactly zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConvexityLoss


def _fejer_weights(N: int) -> np.ndarray:
    """Fejer's first rule on the Chebyshev angles (j + 1/2) pi / N, for int_{-1}^{1}."""
    theta = (np.arange(N) + 0.5) * np.pi / N
    k = np.arange(1, N // 2 + 1)
    s = np.cos(2.0 * np.outer(theta, k)) @ (1.0 / (4.0 * k**2 - 1.0))
    return (2.0 / N) * (1.0 - 2.0 * s)


@dataclass(frozen=True, eq=False)
class SphericalGrid:
    """Nodes, quadrature weights and antipodal map on S^1 or on the meridian of S^2."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3 (axisymmetric), got {self.n}")
        if self.N < 8:
            raise ValueError("need at least 8 nodes")
        if self.n == 2 and self.N % 2:
            raise ValueError("n = 2 needs an even node count for the antipodal map")

    def __eq__(self, other):
        return isinstance(other, SphericalGrid) and (self.n, self.N) == (other.n, other.N)

    def __hash__(self):
        return hash((self.n, self.N))

    @cached_property
    def spacing(self) -> float:
        return (2.0 * np.pi if self.n == 2 else np.pi) / self.N

    @cached_property
    def theta(self) -> np.ndarray:
        if self.n == 2:
            th = 2.0 * np.pi * np.arange(self.N) / self.N
        else:
            th = (np.arange(self.N) + 0.5) * np.pi / self.N
        th.flags.writeable = False
        return th

    @cached_property
    def weights(self) -> np.ndarray:
        if self.n == 2:
            w = np.full(self.N, 2.0 * np.pi / self.N)
        else:
            w = 2.0 * np.pi * _fejer_weights(self.N)
            w = 0.5 * (w + w[::-1])
        w.flags.writeable = False
        return w

    @cached_property
    def antipode(self) -> np.ndarray:
        idx = np.arange(self.N)
        if self.n == 2:
            a = (idx + self.N // 2) % self.N
        else:
            a = self.N - 1 - idx
        a.flags.writeable = False
        return a

    @cached_property
    def cot(self) -> np.ndarray:
        """cot(theta), exactly odd under theta -> pi - theta (n = 3 only)."""
        c = 1.0 / np.tan(self.theta)
        half = self.N // 2
        c[self.N - half :] = -c[:half][::-1]
        if self.N % 2:
            c[half] = 0.0
        c.flags.writeable = False
        return c

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit vectors x_i (in the meridian plane y = 0 for n = 3)."""
        th = self.theta
        if self.n == 2:
            return np.stack([np.cos(th), np.sin(th)], axis=-1)
        return np.stack([np.sin(th), np.zeros_like(th), np.cos(th)], axis=-1)

    @cached_property
    def tangents(self) -> np.ndarray:
        """Unit tangent d x / d theta."""
        th = self.theta
        if self.n == 2:
            return np.stack([-np.sin(th), np.cos(th)], axis=-1)
        return np.stack([np.cos(th), np.zeros_like(th), -np.sin(th)], axis=-1)

    @property
    def area(self) -> float:
        """Exact measure of S^{n-1}."""
        return 2.0 * np.pi if self.n == 2 else 4.0 * np.pi

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def pad(self, values: np.ndarray, width: int = 2) -> np.ndarray:
        """Ghost-padded copy along axis 0 (periodic wrap or pole reflection)."""
        mode = "wrap" if self.n == 2 else "symmetric"
        pad = [(width, width)] + [(0, 0)] * (values.ndim - 1)
        return np.pad(values, pad, mode=mode)

    def diff(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Fourth-order first and second theta-derivatives along axis 0."""
        p = self.pad(values)
        c = p[2:-2]
        dt = self.spacing
        d1 = (8.0 * (p[3:-1] - p[1:-3]) - (p[4:] - p[:-4])) / (12.0 * dt)
        d2 = (16.0 * ((p[3:-1] - c) + (p[1:-3] - c)) - ((p[4:] - c) + (p[:-4] - c))) / (12.0 * dt * dt)
        return d1, d2

    @cached_property
    def diff_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Sparse matrices of :meth:`diff` (ghost handling folded in)."""
        d1, d2 = self.diff(np.eye(self.N))
        return sp.csr_matrix(np.where(np.abs(d1) > 0, d1, 0.0)), sp.csr_matrix(np.where(np.abs(d2) > 0, d2, 0.0))


class SupportField:
    """Samples of an even support function on a grid, with derived geometry.

    Derived quantities are computed lazily and cached; the sample array is
    read-only, so a field is a value object.
    """

    def __init__(self, grid: SphericalGrid, h):
        h = np.array(h, dtype=float)
        if h.shape != (grid.N,):
            raise ValueError(f"expected {grid.N} samples, got shape {h.shape}")
        if np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise ValueError("support function must be positive and finite")
        h.flags.writeable = False
        self.grid = grid
        self.h = h

    def __repr__(self) -> str:
        return f"SupportField(n={self.grid.n}, N={self.grid.N}, h in [{self.h.min():.6g}, {self.h.max():.6g}])"

    @cached_property
    def _derivs(self) -> tuple[np.ndarray, np.ndarray]:
        return self.grid.diff(self.h)

    @property
    def dh(self) -> np.ndarray:
        return self._derivs[0]

    @property
    def d2h(self) -> np.ndarray:
        return self._derivs[1]

    @cached_property
    def radii(self) -> np.ndarray:
        """Principal radii of curvature, shape (N, n - 1)."""
        lam1 = self.d2h + self.h
        if self.grid.n == 2:
            return lam1[:, None]
        lam2 = self.dh * self.grid.cot + self.h
        return np.stack([lam1, lam2], axis=-1)

    @cached_property
    def det_b(self) -> np.ndarray:
        r = self.radii
        return r[:, 0] if r.shape[1] == 1 else r[:, 0] * r[:, 1]

    @property
    def gauss_curvature(self) -> np.ndarray:
        return 1.0 / self.det_b

    @cached_property
    def points(self) -> np.ndarray:
        """Boundary points h x + h' e_theta, shape (N, n)."""
        g = self.grid
        return self.h[:, None] * g.normals + self.dh[:, None] * g.tangents

    @cached_property
    def rho(self) -> np.ndarray:
        return np.hypot(self.h, self.dh)

    @property
    def is_convex(self) -> bool:
        return bool(np.all(self.radii > 0))

    def check_convex(self) -> None:
        r = self.radii
        bad = np.argwhere(r <= 0)
        if bad.size:
            i, j = bad[0]
            raise ConvexityLoss(int(i), float(r[i, j]))

    def is_even(self) -> bool:
        return bool(np.array_equal(self.h, self.h[self.grid.antipode]))

    def scaled(self, s: float) -> "SupportField":
        return SupportField(self.grid, s * self.h)


def derivatives(field: SupportField) -> tuple[np.ndarray, np.ndarray]:
    """First and second tangential derivatives of h."""
    return field.dh, field.d2h


def curvature_matrix(field: SupportField) -> tuple[np.ndarray, np.ndarray]:
    """Principal radii per node and det b; raises ConvexityLoss on a non-positive radius."""
    field.check_convex()
    return field.radii, field.det_b


def embedding(field: SupportField) -> tuple[np.ndarray, np.ndarray]:
    """Boundary points and their distances rho from the origin."""
    return field.points, field.rho


def symmetrize(field: SupportField) -> SupportField:
    """Average each node with its antipode; exact evenness, idempotent."""
    h = field.h
    even = 0.5 * (h + h[field.grid.antipode])
    if np.array_equal(even, h):
        return field
    return SupportField(field.grid, even)


def radial_rate(field: SupportField, dh_dt) -> np.ndarray:
    """Rate of change of the radial function at the boundary point of each node."""
    dh_dt = np.asarray(dh_dt, dtype=float)
    if dh_dt.shape != field.h.shape:
        raise ValueError("dh_dt must match the field")
    return field.rho / field.h * dh_dt


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


PROFILE_HEADER = ["theta", "h", "det_b", "rho"]


def write_profile(field: SupportField, path) -> None:
    """Write the field as CSV rows (theta, h, det b, rho) with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_HEADER)
        for row in zip(field.grid.theta, field.h, field.det_b, field.rho):
            w.writerow([_fmt(v) for v in row])


def read_profile(path, n: int) -> SupportField:
    """Read a profile written by :func:`write_profile` back into a field."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.DictReader(fh))
    theta = np.array([float(r["theta"]) for r in rows])
    h = np.array([float(r["h"]) for r in rows])
    grid = SphericalGrid(n, len(h))
    if not np.allclose(theta, grid.theta, rtol=0, atol=1e-12):
        raise ValueError("profile angles do not match the grid")
    return SupportField(grid, h)

