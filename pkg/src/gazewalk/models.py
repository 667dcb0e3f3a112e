"""Transition densities f_{k+1}(x | x_1..x_k) for every model family."""

from __future__ import annotations

import math

import numpy as np

from .core import (
    Family,
    HistoryTooShort,
    ModelSpec,
    ParamOutOfRange,
    Window,
    ZeroDensityAtPoint,
    ZeroMass,
    as_points,
)
from .geometry import ConvexHull, ball_union_area, convex_hull, hull_contains, recurrence_counts
from .heterogeneity import SaliencyMap
from .kernels import KernelParams, adapted_width, kernel_unnorm
from .quadrature import QuadratureGrid


class HistoryState:
    """The points generated so far plus cached coverage measures.

    The hull is updated from the previous hull's vertices and the new point,
    which gives the same hull as recomputing from every point. The exact
    ball-union area is computed lazily and cached per length.
    """

    def __init__(self, window: Window, points=(), r: float | None = None):
        self.window = window
        self.r = r
        self._pts = np.zeros((0, 2))
        self._hull: ConvexHull | None = None
        self._ball_area: tuple[int, float] | None = None
        for p in as_points(points):
            self.append(p)

    @classmethod
    def from_points(cls, window: Window, points, r=None) -> "HistoryState":
        state = cls(window, r=r)
        pts = as_points(points)
        state._pts = pts.copy()
        state._hull = convex_hull(pts) if len(pts) else None
        return state

    @property
    def k(self) -> int:
        return len(self._pts)

    def __len__(self):
        return self.k

    @property
    def points(self) -> np.ndarray:
        return self._pts

    @property
    def current(self) -> np.ndarray:
        if self.k == 0:
            raise HistoryTooShort("empty history has no current point")
        return self._pts[-1]

    def append(self, x) -> None:
        x = np.asarray(x, dtype=float).reshape(1, 2)
        self._pts = np.vstack([self._pts, x])
        base = x if self._hull is None else np.vstack([self._hull.vertices, x])
        self._hull = convex_hull(base)

    @property
    def hull(self) -> ConvexHull:
        if self._hull is None:
            raise HistoryTooShort("empty history has no hull")
        return self._hull

    @property
    def hull_area(self) -> float:
        return 0.0 if self._hull is None else self._hull.area

    def ball_area(self, r: float | None = None) -> float:
        r = self.r if r is None else r
        if r is None:
            raise ParamOutOfRange("ball coverage needs a radius")
        if self.k == 0:
            return 0.0
        if self._ball_area is not None and self._ball_area[0] == self.k and r == self.r:
            return self._ball_area[1]
        area = ball_union_area(self._pts, r, self.window)
        if r == self.r:
            self._ball_area = (self.k, area)
        return area

    def coverage(self, kind: str, r: float | None = None) -> float:
        return self.hull_area if kind == "hull" else self.ball_area(r)


def reweight_hull(state: HistoryState, x, rho: float):
    """1 outside the closed hull of the history, ``rho`` inside."""
    arr = np.asarray(x, dtype=float)
    inside = np.atleast_1d(hull_contains(state.hull, as_points(arr)))
    out = np.where(inside, rho, 1.0)
    return float(out[0]) if arr.ndim == 1 else out


def reweight_ball(state: HistoryState, x, rho: float, r: float):
    arr = np.asarray(x, dtype=float)
    covered = recurrence_counts(state.points, as_points(arr), r) > 0
    out = np.where(covered, rho, 1.0)
    return float(out[0]) if arr.ndim == 1 else out


def reweight_recurrence(state: HistoryState, x, theta: float, r: float):
    """theta near an earlier point (excluding the current one), else 1 - theta."""
    if state.k < 2:
        raise HistoryTooShort("recurrence reweighting needs at least two points")
    arr = np.asarray(x, dtype=float)
    hit = recurrence_counts(state.points[:-1], as_points(arr), r) >= 1
    out = np.where(hit, theta, 1.0 - theta)
    return float(out[0]) if arr.ndim == 1 else out


def reweight(spec: ModelSpec, state: HistoryState, x) -> np.ndarray:
    """Vectorised reweighting probability; identically one for non-rejection families.

    The recurrence model falls back to the plain random walk while fewer than
    two points exist.
    """
    X = as_points(x)
    fam = spec.family
    if fam is Family.REJECTION_HULL:
        return reweight_hull(state, X, spec.rho)
    if fam is Family.REJECTION_BALL:
        return reweight_ball(state, X, spec.rho, spec.r)
    if fam is Family.REJECTION_RECURRENCE and state.k >= 2:
        return reweight_recurrence(state, X, spec.theta, spec.r)
    return np.ones(len(X))


def kernel_params(spec: ModelSpec, state: HistoryState) -> KernelParams:
    fam = spec.family
    if fam is Family.BINOMIAL:
        return KernelParams(flat=True)
    if fam is Family.HISTORY_ADAPTED:
        s = state.coverage(spec.coverage, spec.r)
        return KernelParams(adapted_width(spec.tau, spec.kappa, s, state.window.area))
    return KernelParams(spec.sigma2, flat=spec.flat)


def _check_history(state: HistoryState):
    if state.k < 1:
        raise HistoryTooShort("transitions need at least one point of history")


def transition_unnorm(spec: ModelSpec, alpha: SaliencyMap, state: HistoryState, x):
    """alpha(x) * K(x_k, x) * pi(x); scalar for a single point, array otherwise."""
    _check_history(state)
    arr = np.asarray(x, dtype=float)
    X = as_points(arr)
    kp = kernel_params(spec, state)
    out = alpha(X) * kernel_unnorm(state.current, X, kp) * reweight(spec, state, X)
    return float(out[0]) if arr.ndim == 1 else out


def region_weights(spec: ModelSpec, state: HistoryState, quad: QuadratureGrid):
    """Interaction region coverage with its inside/outside weights, or None.

    The reweighting probability is ``w_in`` on the region and ``w_out`` off it.
    """
    fam = spec.family
    if fam is Family.REJECTION_HULL:
        return quad.hull_coverage(state.hull), spec.rho, 1.0
    if fam is Family.REJECTION_BALL:
        return quad.ball_coverage(state.points, spec.r), spec.rho, 1.0
    if fam is Family.REJECTION_RECURRENCE and state.k >= 2:
        return quad.ball_coverage(state.points[:-1], spec.r), spec.theta, 1.0 - spec.theta
    return None


def transition_norm_const(spec: ModelSpec, alpha: SaliencyMap | None, state: HistoryState,
                          quad: QuadratureGrid) -> float:
    """Quadrature approximation of the integral of ``transition_unnorm`` over the window.

    ``alpha`` must be the map the grid was built with (``None`` means that one).
    """
    _check_history(state)
    if alpha is not None and alpha is not quad.alpha_map:
        if alpha.window != quad.window or not np.array_equal(alpha.values, quad.alpha_map.values):
            raise ValueError("quadrature grid was built for a different saliency map")
    kp = kernel_params(spec, state)
    centre = state.current[None]
    total = float(quad.total_masses(centre, kp.variance, kp.flat)[0])
    reg = region_weights(spec, state, quad)
    if reg is not None:
        cov, w_in, w_out = reg
        inside = float(quad.region_masses(centre, cov, kp.variance, kp.flat)[0])
        total = w_out * (total - inside) + w_in * inside
    if not total > 0:
        raise ZeroMass("transition density has zero mass on the quadrature grid")
    return total


def transition_logpdf(spec: ModelSpec, alpha: SaliencyMap | None, state: HistoryState, x,
                      quad: QuadratureGrid):
    alpha = quad.alpha_map if alpha is None else alpha
    arr = np.asarray(x, dtype=float)
    u = np.atleast_1d(transition_unnorm(spec, alpha, state, as_points(arr)))
    if np.any(u <= 0):
        raise ZeroDensityAtPoint(f"zero density at {as_points(arr)[np.argmin(u > 0)]}")
    out = np.log(u) - math.log(transition_norm_const(spec, alpha, state, quad))
    return float(out[0]) if arr.ndim == 1 else out
