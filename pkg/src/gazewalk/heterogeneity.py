"""Scene heterogeneity: saliency rasters and their empirical estimation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .core import (
    FixationSequence,
    GazeWalkError,
    NoAuxiliaryData,
    NonPositiveBandwidth,
    PointOutsideWindow,
    Window,
    as_points,
    pooled_points,
)


@dataclass(frozen=True, eq=False)
class SaliencyMap:
    """Non-negative raster over a window, values at cell centres.

    ``values[j, i]`` belongs to the cell in column ``i`` (x) and row ``j`` (y),
    rows counted upward from ``window.c``. Lookups interpolate bilinearly
    between cell centres and hold the edge value in the outer half-cell.
    """

    window: Window
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise GazeWalkError(f"saliency grid must be at least 2x2, got {v.shape}")
        if not np.isfinite(v).all() or (v < 0).any():
            raise GazeWalkError("saliency values must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.values) == 0.0)

    def scaled(self) -> "SaliencyMap":
        m = self.max
        if m <= 0:
            raise GazeWalkError("cannot scale an all-zero saliency map")
        return SaliencyMap(self.window, self.values / m)

    def __call__(self, pts) -> np.ndarray:
        return _bilinear(self, as_points(pts))


def _bilinear(amap: SaliencyMap, P: np.ndarray) -> np.ndarray:
    w = amap.window
    fx = (P[:, 0] - w.a) / (w.width / amap.nx) - 0.5
    fy = (P[:, 1] - w.c) / (w.height / amap.ny) - 0.5
    fx = np.clip(fx, 0.0, amap.nx - 1)
    fy = np.clip(fy, 0.0, amap.ny - 1)
    i0 = np.minimum(np.floor(fx).astype(int), amap.nx - 2)
    j0 = np.minimum(np.floor(fy).astype(int), amap.ny - 2)
    tx, ty = fx - i0, fy - j0
    v = amap.values
    return ((1 - ty) * ((1 - tx) * v[j0, i0] + tx * v[j0, i0 + 1])
            + ty * ((1 - tx) * v[j0 + 1, i0] + tx * v[j0 + 1, i0 + 1]))


def alpha_at(amap: SaliencyMap, x):
    """Heterogeneity at one point (float) or many points (array)."""
    arr = np.asarray(x, dtype=float)
    P = as_points(arr)
    inside = amap.window.contains(P)
    if not inside.all():
        i = int(np.argmin(inside))
        raise PointOutsideWindow(i, tuple(P[i]))
    out = _bilinear(amap, P)
    return float(out[0]) if arr.ndim == 1 else out


def constant_map(w: Window, nx: int = 2, ny: int = 2) -> SaliencyMap:
    return SaliencyMap(w, np.ones((ny, nx)))


def cell_centres(w: Window, nx: int, ny: int) -> tuple[np.ndarray, np.ndarray]:
    xs = w.a + (np.arange(nx) + 0.5) * (w.width / nx)
    ys = w.c + (np.arange(ny) + 0.5) * (w.height / ny)
    return xs, ys


def default_bandwidth(w: Window) -> float:
    return 0.05 * max(w.width, w.height)


def default_grid(w: Window) -> tuple[int, int]:
    """128 x 96 at 1024 x 768 (8-pixel cells); 64 cells on the long side otherwise."""
    if max(w.width, w.height) >= 100:
        return max(2, int(round(w.width / 8))), max(2, int(round(w.height / 8)))
    side = max(w.width, w.height)
    return max(2, int(round(64 * w.width / side))), max(2, int(round(64 * w.height / side)))


def estimate_saliency(
    aux: Sequence[FixationSequence],
    bandwidth: float | None,
    w: Window,
    nx: int | None = None,
    ny: int | None = None,
    *,
    edge_correction: bool = True,
    scale: bool = True,
    subsample: int | None = None,
    rng: np.random.Generator | None = None,
) -> SaliencyMap:
    """Gaussian kernel intensity of the pooled auxiliary fixations on a grid.

    The sequence under study must not be in ``aux``. With ``edge_correction``
    each grid value is divided by the kernel mass inside ``w`` around that grid
    point. ``subsample`` draws that many fixations per auxiliary sequence
    (without replacement) instead of pooling all of them, and needs ``rng``.
    """
    if not aux:
        raise NoAuxiliaryData("no auxiliary sequences")
    if bandwidth is None:
        bandwidth = default_bandwidth(w)
    if not bandwidth > 0:
        raise NonPositiveBandwidth(f"bandwidth must be positive, got {bandwidth}")
    if nx is None or ny is None:
        nx, ny = default_grid(w)
    if subsample is not None:
        if rng is None:
            raise GazeWalkError("subsampling needs an rng")
        picks = []
        for s in aux:
            m = min(subsample, len(s))
            picks.append(s.points[np.sort(rng.choice(len(s), size=m, replace=False))])
        pts = np.concatenate(picks, axis=0)
    else:
        pts = pooled_points(aux)
    if len(pts) == 0:
        raise NoAuxiliaryData("auxiliary sequences contain no fixations")
    h = float(bandwidth)
    xs, ys = cell_centres(w, nx, ny)
    # separable kernel: sum_i g(x - xi) g(y - yi) as a matrix product
    gx = np.exp(-0.5 * ((xs[None, :] - pts[:, [0]]) / h) ** 2)
    gy = np.exp(-0.5 * ((ys[None, :] - pts[:, [1]]) / h) ** 2)
    dens = (gy.T @ gx) / (2.0 * np.pi * h * h)
    if edge_correction:
        mx = ndtr((w.b - xs) / h) - ndtr((w.a - xs) / h)
        my = ndtr((w.d - ys) / h) - ndtr((w.c - ys) / h)
        dens = dens / np.outer(my, mx)
    amap = SaliencyMap(w, dens)
    return amap.scaled() if scale else amap


def save_raster(amap: SaliencyMap, path) -> None:
    doc = {
        "window": amap.window.as_list(),
        "nx": amap.nx,
        "ny": amap.ny,
        "values": amap.values.ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_raster(path, window: Window | None = None) -> SaliencyMap:
    """Read a JSON raster, or a whitespace-separated text grid (needs ``window``).

    Text grids list rows bottom-up, matching ``SaliencyMap.values``.
    """
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        doc = json.loads(text)
        w = Window(*doc["window"])
        vals = np.asarray(doc["values"], dtype=float)
        if vals.size != doc["nx"] * doc["ny"]:
            raise GazeWalkError(f"{path}: expected {doc['nx']}x{doc['ny']} values, got {vals.size}")
        return SaliencyMap(w, vals.reshape(doc["ny"], doc["nx"]))
    if window is None:
        raise GazeWalkError("plain text rasters need an explicit window")
    return SaliencyMap(window, np.loadtxt(path, ndmin=2))
