"""Midpoint quadrature over the window for transition normalising integrals.

Each cell carries alpha at its centre and, per transition, two refinements
over a plain midpoint rule:

* the Gaussian kernel enters through its exact integral over the cell (the
  kernel is separable, so this is a product of normal CDF differences);
* a self-interaction region (hull or disk union) enters through the fraction
  of the cell it covers and the first moment of the covered part, both
  measured on ``supersample x supersample`` sub-points. The moment gives a
  first-order correction for the kernel's slope across a partly covered cell.

Without the second point the indicator discontinuities dominate the
quadrature error of the likelihood.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.special import ndtr

from .core import GazeWalkError, Window, as_points
from .geometry import ConvexHull, hull_contains, hull_edge_distances
from .heterogeneity import SaliencyMap, cell_centres, constant_map, default_grid

SQRT_2PI = math.sqrt(2.0 * math.pi)


class Coverage(NamedTuple):
    """Per-cell covered fraction and mean covered offset from the cell centre.

    ``mx`` and ``my`` average ``u * covered(u)`` over the sub-points, in window
    units, so they vanish for fully covered or empty cells.
    """

    frac: np.ndarray
    mx: np.ndarray
    my: np.ndarray


class QuadratureGrid:
    def __init__(self, window: Window, nx: int | None = None, ny: int | None = None,
                 alpha: SaliencyMap | None = None, supersample: int = 16):
        if nx is None or ny is None:
            nx, ny = default_grid(window)
        if nx < 16 or ny < 16:
            raise GazeWalkError(f"quadrature grid must be at least 16x16, got {nx}x{ny}")
        if supersample < 1:
            raise GazeWalkError("supersample must be >= 1")
        if alpha is None:
            alpha = constant_map(window)
        if alpha.window != window:
            raise GazeWalkError("saliency map and quadrature grid use different windows")
        self.window = window
        self.nx, self.ny = int(nx), int(ny)
        self.supersample = int(supersample)
        self.alpha_map = alpha
        self.dx = window.width / self.nx
        self.dy = window.height / self.ny
        self.cell_area = self.dx * self.dy
        self.xs, self.ys = cell_centres(window, self.nx, self.ny)
        self.x_edges = window.a + np.arange(self.nx + 1) * self.dx
        self.y_edges = window.c + np.arange(self.ny + 1) * self.dy
        self.x_edges[-1], self.y_edges[-1] = window.b, window.d
        X, Y = np.meshgrid(self.xs, self.ys)
        self.centres = np.column_stack([X.ravel(), Y.ravel()])
        self.alpha = alpha(self.centres).reshape(self.ny, self.nx)
        self.alpha.setflags(write=False)

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        return QuadratureGrid(self.window, self.nx * factor, self.ny * factor,
                              self.alpha_map, self.supersample)

    def __repr__(self):
        return f"QuadratureGrid({self.nx}x{self.ny}, supersample={self.supersample})"

    # -- kernel ---------------------------------------------------------------

    def axis_factors(self, centres, variances=None, flat: bool = False):
        """Per-axis cell integrals of the kernel, shapes ``(m, nx)`` and ``(m, ny)``.

        The kernel mass of cell (j, i) for centre k is ``gx[k, i] * gy[k, j]``.
        For the flat kernel that is the cell area.
        """
        C = as_points(centres)
        m = len(C)
        if flat:
            return np.full((m, self.nx), self.dx), np.full((m, self.ny), self.dy)
        var = np.broadcast_to(np.asarray(variances, dtype=float), (m,))
        s = np.sqrt(var)[:, None]
        gx = SQRT_2PI * s * _cell_mass(self.x_edges, C[:, [0]], s)
        gy = SQRT_2PI * s * _cell_mass(self.y_edges, C[:, [1]], s)
        return gx, gy

    def kernel_mass(self, centre, variance=None, flat: bool = False) -> np.ndarray:
        gx, gy = self.axis_factors(centre, variance, flat)
        return np.outer(gy[0], gx[0])

    # -- interaction regions --------------------------------------------------

    def _sub_offsets(self):
        s = self.supersample
        u = (np.arange(s) + 0.5) / s - 0.5
        ox, oy = np.meshgrid(u * self.dx, u * self.dy)
        return np.column_stack([ox.ravel(), oy.ravel()])

    def hull_coverage(self, hull: ConvexHull) -> Coverage:
        """Coverage of every cell by the (closed) hull; empty if degenerate."""
        size = self.ny * self.nx
        frac, mx, my = np.zeros(size), np.zeros(size), np.zeros(size)
        if not hull.degenerate:
            half_diag = 0.5 * math.hypot(self.dx, self.dy)
            m = hull_edge_distances(hull, self.centres)
            frac[m <= -half_diag] = 1.0
            amb = np.flatnonzero((m > -half_diag) & (m < half_diag))
            if len(amb):
                off = self._sub_offsets()
                sub = (self.centres[amb, None, :] + off[None, :, :]).reshape(-1, 2)
                inside = hull_contains(hull, sub).reshape(len(amb), len(off))
                frac[amb] = inside.mean(axis=1)
                mx[amb] = inside @ off[:, 0] / len(off)
                my[amb] = inside @ off[:, 1] / len(off)
        shape = (self.ny, self.nx)
        return Coverage(frac.reshape(shape), mx.reshape(shape), my.reshape(shape))

    def hull_fraction(self, hull: ConvexHull) -> np.ndarray:
        return self.hull_coverage(hull).frac

    def ball_union(self, r: float) -> "FineBallUnion":
        return FineBallUnion(self, r)

    def ball_coverage(self, points, r: float) -> Coverage:
        u = FineBallUnion(self, r)
        for p in as_points(points):
            u.add(p)
        return u.coverage()

    def ball_fraction(self, points, r: float) -> np.ndarray:
        return self.ball_coverage(points, r).frac

    # -- alpha-weighted kernel masses -----------------------------------------

    def total_masses(self, centres, variances=None, flat: bool = False) -> np.ndarray:
        """Integral of alpha times the kernel over the window, per centre."""
        gx, gy = self.axis_factors(centres, variances, flat)
        return np.einsum("kj,ji,ki->k", gy, self.alpha, gx)

    def region_masses(self, centres, cov: Coverage, variances=None, flat: bool = False) -> np.ndarray:
        """Integral of alpha times the kernel over a covered region, per centre.

        ``cov`` holds one coverage per centre (arrays of shape ``(m, ny, nx)``)
        or a single coverage shared by all of them.
        """
        C = as_points(centres)
        gx, gy = self.axis_factors(C, variances, flat)
        frac, mx, my = (np.broadcast_to(a, (len(C), self.ny, self.nx)) for a in cov)
        a = self.alpha[None]
        out = np.einsum("kj,kji,ki->k", gy, a * frac, gx)
        if not flat:
            # K(c + u) ~ K(c) (1 - (c - x_k) . u / variance) inside a cell
            var = np.broadcast_to(np.asarray(variances, dtype=float), (len(C),))
            gxd = gx * (self.xs[None, :] - C[:, [0]])
            gyd = gy * (self.ys[None, :] - C[:, [1]])
            out = out - (np.einsum("kj,kji,ki->k", gy, a * mx, gxd)
                         + np.einsum("kj,kji,ki->k", gyd, a * my, gx)) / var
        return out

    # -- integrals ------------------------------------------------------------

    def integrate(self, field: np.ndarray) -> float:
        """Plain midpoint integral of a per-cell field."""
        return float(field.sum() * self.cell_area)


def _cell_mass(edges, centre, sigma):
    # Phi differences between consecutive edges; mirrored where both edges
    # lie right of the centre to keep precision in the far tail.
    z = (edges[None, :] - centre) / sigma
    lo, hi = z[:, :-1], z[:, 1:]
    return np.where(lo > 0, ndtr(-lo) - ndtr(-hi), ndtr(hi) - ndtr(lo))


class FineBallUnion:
    """Incremental union of open disks measured as per-cell covered fractions."""

    def __init__(self, quad: QuadratureGrid, r: float):
        if not r > 0:
            raise GazeWalkError("radius must be positive")
        self.quad = quad
        self.r = float(r)
        s = quad.supersample
        self.s = s
        self.mask = np.zeros((quad.ny * s, quad.nx * s), dtype=bool)
        self.counts = np.zeros((quad.ny, quad.nx), dtype=np.int64)
        self.sum_x = np.zeros((quad.ny, quad.nx))
        self.sum_y = np.zeros((quad.ny, quad.nx))
        self.fdx = quad.dx / s
        self.fdy = quad.dy / s
        u = (np.arange(s) + 0.5) / s - 0.5
        self._ux = u * quad.dx
        self._uy = u * quad.dy

    def add(self, p) -> None:
        q, r, s = self.quad, self.r, self.s
        w = q.window
        px, py = float(p[0]), float(p[1])
        i0 = max(0, int(math.floor((px - r - w.a) / q.dx)))
        i1 = min(q.nx, int(math.floor((px + r - w.a) / q.dx)) + 1)
        j0 = max(0, int(math.floor((py - r - w.c) / q.dy)))
        j1 = min(q.ny, int(math.floor((py + r - w.c) / q.dy)) + 1)
        if i1 <= i0 or j1 <= j0:
            return
        fx = w.a + (np.arange(i0 * s, i1 * s) + 0.5) * self.fdx
        fy = w.c + (np.arange(j0 * s, j1 * s) + 0.5) * self.fdy
        disk = ((fx[None, :] - px) ** 2 + (fy[:, None] - py) ** 2) < r * r
        sub = self.mask[j0 * s:j1 * s, i0 * s:i1 * s]
        new = disk & ~sub
        sub |= disk
        blocks = new.reshape(j1 - j0, s, i1 - i0, s)
        self.counts[j0:j1, i0:i1] += blocks.sum(axis=(1, 3))
        self.sum_x[j0:j1, i0:i1] += blocks.sum(axis=1) @ self._ux
        self.sum_y[j0:j1, i0:i1] += np.einsum("jsi,s->ji", blocks.sum(axis=3), self._uy)

    def fraction(self) -> np.ndarray:
        return self.counts / float(self.s * self.s)

    def coverage(self) -> Coverage:
        n = float(self.s * self.s)
        return Coverage(self.counts / n, self.sum_x / n, self.sum_y / n)
