"""Coverage and recurrence geometry: convex hulls, disk unions, delayed counts."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    EmptyInput,
    FixationSequence,
    IndexOutOfRange,
    NonPositiveRadius,
    Window,
    as_points,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True, eq=False)
class ConvexHull:
    """Hull vertices in counter-clockwise order starting at the lexicographic minimum.

    Collinear points on edges are dropped, so a fully collinear input gives
    the two segment endpoints and a single distinct point gives one vertex.
    """

    vertices: np.ndarray

    @property
    def degenerate(self) -> bool:
        return len(self.vertices) < 3

    def __len__(self):
        return len(self.vertices)

    def __eq__(self, other):
        if not isinstance(other, ConvexHull):
            return NotImplemented
        return np.array_equal(self.vertices, other.vertices)

    __hash__ = None

    @property
    def area(self) -> float:
        return hull_area(self)

    def contains(self, pts, tol: float = 1e-12) -> np.ndarray:
        return hull_contains(self, pts, tol)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> ConvexHull:
    """Andrew's monotone chain on the de-duplicated input."""
    pts = as_points(points)
    if len(pts) == 0:
        raise EmptyInput("convex hull of an empty point set")
    pts = np.unique(pts, axis=0)  # lexicographic sort + dedup
    if len(pts) <= 2:
        return ConvexHull(_frozen(pts))
    P = [tuple(p) for p in pts]
    lower: list = []
    for p in P:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(P):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    verts = lower[:-1] + upper[:-1]
    if len(verts) == 2 and verts[0] == verts[1]:
        verts = verts[:1]
    return ConvexHull(_frozen(np.array(verts, dtype=float)))


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=float).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


def hull_area(h: ConvexHull) -> float:
    """Shoelace area; zero for degenerate hulls."""
    if h.degenerate:
        return 0.0
    x, y = h.vertices[:, 0], h.vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def hull_contains(h: ConvexHull, pts, tol: float = 1e-12):
    """Closed membership test. Returns a bool for a single point, else an array."""
    arr = np.asarray(pts, dtype=float)
    single = arr.ndim == 1
    P = as_points(arr)
    V = h.vertices
    scale = max(1.0, float(np.abs(V).max())) if len(V) else 1.0
    eps = tol * scale * scale
    if len(V) == 1:
        inside = np.all(np.abs(P - V[0]) <= tol * scale, axis=1)
    elif len(V) == 2:
        a, b = V
        ab = b - a
        ap = P - a
        cross = ab[0] * ap[:, 1] - ab[1] * ap[:, 0]
        t = ap @ ab
        inside = (np.abs(cross) <= eps) & (t >= -eps) & (t <= ab @ ab + eps)
    else:
        E = np.roll(V, -1, axis=0) - V
        D = P[:, None, :] - V[None, :, :]
        cross = E[None, :, 0] * D[:, :, 1] - E[None, :, 1] * D[:, :, 0]
        inside = np.all(cross >= -eps, axis=1)
    return bool(inside[0]) if single else inside


def hull_edge_distances(h: ConvexHull, pts) -> np.ndarray:
    """Largest signed distance from each point to the hull's edge lines (negative inside)."""
    V = h.vertices
    E = np.roll(V, -1, axis=0) - V
    L = np.hypot(E[:, 0], E[:, 1])
    P = as_points(pts)
    D = P[:, None, :] - V[None, :, :]
    cross = E[None, :, 0] * D[:, :, 1] - E[None, :, 1] * D[:, :, 0]
    return np.max(-cross / L[None, :], axis=1)


def _check_radius(r):
    if not (r > 0):
        raise NonPositiveRadius(f"radius must be positive, got {r}")


def _merge(intervals):
    """Union of (lo, hi) intervals, sorted."""
    if not intervals:
        return []
    intervals = sorted(intervals)
    out = [list(intervals[0])]
    for lo, hi in intervals[1:]:
        if lo <= out[-1][1]:
            if hi > out[-1][1]:
                out[-1][1] = hi
        else:
            out.append([lo, hi])
    return out


def _add_angular(excl, lo, hi):
    """Add the angular interval (lo, hi) to ``excl``, splitting at 2*pi."""
    if hi - lo >= TWO_PI:
        excl.append((0.0, TWO_PI))
        return
    width = hi - lo
    if width <= 0.0:
        return
    lo = lo % TWO_PI
    hi = lo + width
    if hi <= TWO_PI:
        excl.append((lo, hi))
    else:
        excl.append((lo, TWO_PI))
        excl.append((0.0, hi - TWO_PI))


def _disk_union_area_exact(pts: np.ndarray, r: float, w: Window) -> float:
    # Green's theorem over the boundary of (union of disks) ∩ W: uncovered
    # arcs inside W plus the window-edge pieces covered by some disk.
    pts = np.unique(pts, axis=0)
    n = len(pts)
    total = 0.0
    for i in range(n):
        cx, cy = pts[i]
        excl: list = []
        # Arcs outside W. For a half-plane with outward direction u at
        # normalised offset q, the outside arc is |t - u| < pi - acos(q).
        for q, out_dir in (((w.a - cx) / r, math.pi), ((cx - w.b) / r, 0.0),
                           ((w.c - cy) / r, 1.5 * math.pi), ((cy - w.d) / r, 0.5 * math.pi)):
            if q >= 1.0:
                excl.append((0.0, TWO_PI))
                break
            if q > -1.0:
                half = math.pi - math.acos(q)
                _add_angular(excl, out_dir - half, out_dir + half)
        else:
            d = pts - pts[i]
            dist = np.hypot(d[:, 0], d[:, 1])
            near = (dist < 2.0 * r) & (dist > 0.0)
            for j in np.flatnonzero(near):
                beta = math.acos(dist[j] / (2.0 * r))
                phi = math.atan2(d[j, 1], d[j, 0])
                _add_angular(excl, phi - beta, phi + beta)
        merged = _merge(excl)
        arcs = []
        prev = 0.0
        for lo, hi in merged:
            if lo > prev:
                arcs.append((prev, lo))
            prev = max(prev, hi)
        if prev < TWO_PI:
            arcs.append((prev, TWO_PI))
        for t1, t2 in arcs:
            total += 0.5 * (r * r * (t2 - t1) + r * cx * (math.sin(t2) - math.sin(t1))
                            - r * cy * (math.cos(t2) - math.cos(t1)))
    # window edges, traversed counter-clockwise
    edges = (
        ("x", w.c, w.a, w.b, +1),  # bottom: y = c, x from a to b
        ("y", w.b, w.c, w.d, +1),  # right: x = b, y from c to d
        ("x", w.d, w.a, w.b, -1),  # top: y = d, x from b to a
        ("y", w.a, w.c, w.d, -1),  # left: x = a, y from d to c
    )
    for axis, level, lo_lim, hi_lim, direction in edges:
        along, across = (pts[:, 0], pts[:, 1]) if axis == "x" else (pts[:, 1], pts[:, 0])
        off = np.abs(across - level)
        hit = off < r
        half = np.sqrt(r * r - off[hit] ** 2)
        ivs = [(max(lo_lim, s - h), min(hi_lim, s + h)) for s, h in zip(along[hit], half)]
        for lo, hi in _merge([iv for iv in ivs if iv[1] > iv[0]]):
            if axis == "x":
                p1, p2 = (lo, level), (hi, level)
            else:
                p1, p2 = (level, lo), (level, hi)
            if direction < 0:
                p1, p2 = p2, p1
            total += 0.5 * (p1[0] * p2[1] - p2[0] * p1[1])
    return total


def _disk_union_area_raster(pts: np.ndarray, r: float, w: Window, resolution: int) -> float:
    raster = BallRaster(w, r, resolution)
    for p in pts:
        raster.add(p)
    return raster.area


def ball_union_area(points, r: float, w: Window, method: str = "exact", resolution: int = 1024) -> float:
    """Area of the union of open radius-``r`` disks around ``points``, clipped to ``w``.

    ``method="exact"`` integrates along the boundary of the union (arcs and
    window edges). ``method="raster"`` counts cell centres on a grid with
    ``resolution`` cells along the longer window side.
    """
    _check_radius(r)
    pts = as_points(points)
    if len(pts) == 0:
        return 0.0
    if method == "exact":
        area = _disk_union_area_exact(pts, float(r), w)
        return float(min(max(area, 0.0), w.area))
    if method == "raster":
        return _disk_union_area_raster(pts, float(r), w, resolution)
    raise ValueError(f"unknown method {method!r}")


class BallRaster:
    """Incremental cell-centre raster of a disk union over a window."""

    def __init__(self, w: Window, r: float, resolution: int = 1024, shape: tuple[int, int] | None = None):
        _check_radius(r)
        self.window = w
        self.r = float(r)
        if shape is None:
            side = max(w.width, w.height)
            nx = max(1, int(round(resolution * w.width / side)))
            ny = max(1, int(round(resolution * w.height / side)))
        else:
            ny, nx = shape
        self.nx, self.ny = nx, ny
        self.dx, self.dy = w.width / nx, w.height / ny
        self.mask = np.zeros((ny, nx), dtype=bool)
        self._count = 0

    def add(self, p):
        """OR the disk around ``p`` into the mask; return (row slice, col slice, newly covered)."""
        w, r = self.window, self.r
        px, py = float(p[0]), float(p[1])
        i0 = max(0, int(math.floor((px - r - w.a) / self.dx)))
        i1 = min(self.nx, int(math.ceil((px + r - w.a) / self.dx)) + 1)
        j0 = max(0, int(math.floor((py - r - w.c) / self.dy)))
        j1 = min(self.ny, int(math.ceil((py + r - w.c) / self.dy)) + 1)
        xs = w.a + (np.arange(i0, i1) + 0.5) * self.dx
        ys = w.c + (np.arange(j0, j1) + 0.5) * self.dy
        disk = ((xs[None, :] - px) ** 2 + (ys[:, None] - py) ** 2) < r * r
        sub = self.mask[j0:j1, i0:i1]
        new = disk & ~sub
        sub |= disk
        self._count += int(new.sum())
        return slice(j0, j1), slice(i0, i1), new

    @property
    def area(self) -> float:
        return self._count * self.dx * self.dy


def delayed_recurrence(seq, k: int, x, r: float) -> int:
    """Number of points among ``x_1 .. x_{k-1}`` strictly within ``r`` of ``x``.

    ``k`` is 1-based as in the model notation: the current point ``x_k`` is
    excluded.
    """
    _check_radius(r)
    pts = seq.points if isinstance(seq, FixationSequence) else as_points(seq)
    if not 2 <= k <= len(pts):
        raise IndexOutOfRange(f"k={k} outside 2..{len(pts)}")
    return int(recurrence_counts(pts[: k - 1], x, r)[0])


def recurrence_counts(history, x, r: float) -> np.ndarray:
    """Vectorised count of ``history`` points strictly within ``r`` of each row of ``x``."""
    H = as_points(history)
    X = as_points(x)
    if len(H) == 0:
        return np.zeros(len(X), dtype=int)
    d2 = ((X[:, None, :] - H[None, :, :]) ** 2).sum(-1)
    return (d2 < r * r).sum(axis=1)
