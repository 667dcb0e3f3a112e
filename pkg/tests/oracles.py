"""Slow, independent reference computations used only by the tests."""

import math

import numpy as np
from scipy import integrate


def brute_force_hull_area(points):
    """O(n^3) hull: keep every directed pair with no point strictly to its right."""
    P = np.unique(np.asarray(points, dtype=float), axis=0)
    n = len(P)
    if n < 3:
        return 0.0
    verts = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = P[j] - P[i]
            cross = d[0] * (P[:, 1] - P[i, 1]) - d[1] * (P[:, 0] - P[i, 0])
            if np.all(cross >= -1e-15):
                verts.update((i, j))
    V = P[sorted(verts)]
    c = V.mean(axis=0)
    V = V[np.argsort(np.arctan2(V[:, 1] - c[1], V[:, 0] - c[0]))]
    x, y = V[:, 0], V[:, 1]
    # collinear boundary points contribute zero-area triangles
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def raster_disk_union_area(points, r, window, resolution=4096):
    """Pixel-centre count of the disk union on a ``resolution`` square raster."""
    a, b, c, d = window
    dx, dy = (b - a) / resolution, (d - c) / resolution
    covered = np.zeros((resolution, resolution), dtype=bool)
    for px, py in np.asarray(points, dtype=float):
        i0 = max(0, int((px - r - a) / dx) - 1)
        i1 = min(resolution, int((px + r - a) / dx) + 2)
        j0 = max(0, int((py - r - c) / dy) - 1)
        j1 = min(resolution, int((py + r - c) / dy) + 2)
        if i1 <= i0 or j1 <= j0:
            continue
        xs = a + (np.arange(i0, i1) + 0.5) * dx
        ys = c + (np.arange(j0, j1) + 0.5) * dy
        covered[j0:j1, i0:i1] |= (xs[None, :] - px) ** 2 + (ys[:, None] - py) ** 2 < r * r
    return float(covered.sum()) * dx * dy


def dblquad_kernel_norm(center, variance, window):
    """Adaptive 2D quadrature of the unnormalised Gaussian kernel, split at the centre."""
    a, b, c, d = window
    cx, cy = center
    xs = sorted({a, b, min(max(cx, a), b)})
    ys = sorted({c, d, min(max(cy, c), d)})
    total = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        for y0, y1 in zip(ys, ys[1:]):
            val, _ = integrate.dblquad(
                lambda y, x: math.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * variance)),
                x0, x1, y0, y1, epsabs=0.0, epsrel=1e-11)
            total += val
    return total


def fine_grid_integral(fn, window, resolution=1024):
    """Midpoint rule for a vectorised fn((m, 2) points) over the window."""
    a, b, c, d = window
    dx, dy = (b - a) / resolution, (d - c) / resolution
    xs = a + (np.arange(resolution) + 0.5) * dx
    ys = c + (np.arange(resolution) + 0.5) * dy
    total = 0.0
    for y in ys:
        row = np.column_stack([xs, np.full(resolution, y)])
        total += float(fn(row).sum())
    return total * dx * dy


def naive_recurrence(points, k, x, r):
    """Count of x_1..x_{k-1} strictly within r of x (1-based k)."""
    return sum(1 for p in points[: k - 1] if math.dist(p, x) < r)
