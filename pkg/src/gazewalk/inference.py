"""Log-likelihoods, profile-likelihood grid fitting and bootstrap intervals.

The normalising integral of transition k splits into the kernel mass inside
the interaction region (``B_k``) and outside it (``A_k``). Both depend on the
kernel width only, so for a fixed width the whole interaction-parameter grid
costs one pass.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DegenerateLikelihood,
    Family,
    FixationSequence,
    GazeWalkError,
    ModelSpec,
    ParamOutOfRange,
    RngSpec,
    ThetaOnBoundaryWithMismatch,
    ZeroDensityAtObservation,
    ZeroMass,
)
from .geometry import ball_union_area, convex_hull, hull_contains, recurrence_counts
from .heterogeneity import SaliencyMap
from .quadrature import Coverage, QuadratureGrid
from .simulate import SimulationConfig, simulate

REGIONS = ("hull", "ball", "recurrence")


def _grid_for(quad: QuadratureGrid | None, alpha: SaliencyMap | None, window) -> QuadratureGrid:
    if quad is None:
        return QuadratureGrid(window, alpha=alpha)
    if alpha is None or alpha is quad.alpha_map:
        return quad
    return QuadratureGrid(quad.window, quad.nx, quad.ny, alpha, quad.supersample)


def _xlogy(count: int, w: float) -> float:
    if count == 0:
        return 0.0
    return count * math.log(w) if w > 0 else -math.inf


class _Transitions:
    """Observed transitions x_k -> x_{k+1} for k = start .. n-1 (1-based)."""

    def __init__(self, seq: FixationSequence, quad: QuadratureGrid, start: int):
        pts = seq.points
        n = len(pts)
        if n < start + 1:
            raise GazeWalkError(f"need at least {start + 1} points, got {n}")
        self.start = start
        self.ks = np.arange(start, n)
        self.centres = pts[self.ks - 1]
        self.targets = pts[self.ks]
        self.d2 = ((self.centres - self.targets) ** 2).sum(axis=1)
        a = quad.alpha_map(self.targets)
        if np.any(a <= 0):
            i = int(np.argmin(a > 0))
            raise ZeroDensityAtObservation(int(self.ks[i]), "(alpha is zero there)")
        self.sum_log_alpha = float(np.log(a).sum())

    def __len__(self):
        return len(self.ks)


class RegionLikelihood:
    """Log-likelihood of a rejection model whose reweighting is region-valued.

    ``region`` is ``"hull"`` (closed hull of x_1..x_k), ``"ball"`` (disk
    union of x_1..x_k) or ``"recurrence"`` (disk union of x_1..x_{k-1}).
    Weight ``w_in`` applies inside the region, ``w_out`` outside.
    """

    def __init__(self, seq: FixationSequence, quad: QuadratureGrid, region: str,
                 r: float | None = None, start: int | None = None):
        if region not in REGIONS:
            raise ValueError(f"unknown region {region!r}")
        if region != "hull" and not (r is not None and r > 0):
            raise ParamOutOfRange(f"{region} likelihood needs a radius r > 0")
        if start is None:
            start = 2 if region == "recurrence" else 1
        self.quad = quad
        self.region = region
        self.r = r
        self.obs = _Transitions(seq, quad, start)
        pts = seq.points
        m = len(self.obs)
        cov = np.empty((3, m, quad.ny, quad.nx))
        inside = np.zeros(m, dtype=bool)
        if region == "hull":
            for t, k in enumerate(self.obs.ks):
                h = convex_hull(pts[:k])
                cov[:, t] = quad.hull_coverage(h)
                inside[t] = hull_contains(h, pts[k])
        else:
            union = quad.ball_union(r)
            lag = 1 if region == "recurrence" else 0
            added = 0
            for t, k in enumerate(self.obs.ks):
                upto = k - lag
                while added < upto:
                    union.add(pts[added])
                    added += 1
                cov[:, t] = union.coverage()
                inside[t] = recurrence_counts(pts[:upto], pts[k], r)[0] >= 1
        self.inside = inside
        self.n_in = int(inside.sum())
        self.n_out = m - self.n_in
        self._cov = Coverage(*cov)
        self._cache: dict = {}

    def masses(self, variance: float | None, flat: bool = False):
        """Per-transition alpha-weighted kernel mass outside and inside the region."""
        key = "flat" if flat else float(variance)
        hit = self._cache.get(key)
        if hit is None:
            c = self.obs.centres
            total = self.quad.total_masses(c, variance, flat)
            b_in = self.quad.region_masses(c, self._cov, variance, flat)
            hit = self._cache[key] = (total - b_in, b_in)
        return hit

    def loglik(self, variance: float | None, w_in: float, w_out: float, flat: bool = False) -> float:
        a_out, b_in = self.masses(variance, flat)
        norm = w_out * a_out + w_in * b_in
        if np.any(norm <= 0):
            raise ZeroMass("transition density has zero mass")
        ll = self.obs.sum_log_alpha
        if not flat:
            ll -= float(self.obs.d2.sum()) / (2.0 * variance)
        ll += _xlogy(self.n_in, w_in) + _xlogy(self.n_out, w_out)
        return ll - float(np.log(norm).sum())


class AdaptedLikelihood:
    """Log-likelihood of the history-adapted kernel model (transitions from k = start)."""

    def __init__(self, seq: FixationSequence, quad: QuadratureGrid, coverage: str = "hull",
                 r: float | None = None, start: int = 2):
        if coverage not in ("hull", "ball"):
            raise ValueError(f"unknown coverage {coverage!r}")
        if coverage == "ball" and not (r is not None and r > 0):
            raise ParamOutOfRange("ball coverage needs a radius r > 0")
        self.quad = quad
        self.obs = _Transitions(seq, quad, start)
        pts = seq.points
        if coverage == "hull":
            cov = [convex_hull(pts[:k]).area for k in self.obs.ks]
        else:
            cov = [ball_union_area(pts[:k], r, seq.window) for k in self.obs.ks]
        self.coverage = np.asarray(cov)
        self.rel_coverage = self.coverage / seq.window.area

    def widths(self, tau: float, kappa: float) -> np.ndarray:
        if not tau > 0 or not kappa >= 0:
            raise ParamOutOfRange("need tau > 0 and kappa >= 0")
        return tau * np.exp(-kappa * self.rel_coverage)

    def loglik(self, tau: float, kappa: float) -> float:
        phi = self.widths(tau, kappa)
        norm = self.quad.total_masses(self.obs.centres, phi)
        if np.any(norm <= 0):
            raise ZeroMass("transition density has zero mass")
        return (self.obs.sum_log_alpha - float((self.obs.d2 / (2.0 * phi)).sum())
                - float(np.log(norm).sum()))


def loglik_random_walk(seq, sigma2, alpha=None, quad=None, start: int = 1, flat: bool = False) -> float:
    """Random walk in heterogeneous media, summed over transitions k = start .. n-1."""
    quad = _grid_for(quad, alpha, seq.window)
    obs = _Transitions(seq, quad, start)
    norm = quad.total_masses(obs.centres, sigma2, flat)
    ll = obs.sum_log_alpha - float(np.log(norm).sum())
    if not flat:
        ll -= float(obs.d2.sum()) / (2.0 * sigma2)
    return ll


def loglik_binomial(seq, alpha=None, quad=None, start: int = 2) -> float:
    """Independent draws from alpha (normalised over the window), k = start .. n-1."""
    quad = _grid_for(quad, alpha, seq.window)
    obs = _Transitions(seq, quad, start)
    total = quad.integrate(quad.alpha)
    return obs.sum_log_alpha - len(obs) * math.log(total)


def loglik_rejection_hull(seq, sigma2, rho, alpha=None, quad=None, flat: bool = False) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ParamOutOfRange("rho must lie in [0, 1]")
    lik = RegionLikelihood(seq, _grid_for(quad, alpha, seq.window), "hull")
    if rho == 0.0 and lik.n_in:
        k = int(lik.obs.ks[np.argmax(lik.inside)])
        raise ZeroDensityAtObservation(k, "(inside the hull with rho = 0)")
    return lik.loglik(sigma2, rho, 1.0, flat)


def loglik_rejection_ball(seq, sigma2, rho, alpha=None, r=None, quad=None, flat: bool = False) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ParamOutOfRange("rho must lie in [0, 1]")
    lik = RegionLikelihood(seq, _grid_for(quad, alpha, seq.window), "ball", r)
    if rho == 0.0 and lik.n_in:
        k = int(lik.obs.ks[np.argmax(lik.inside)])
        raise ZeroDensityAtObservation(k, "(inside the ball union with rho = 0)")
    return lik.loglik(sigma2, rho, 1.0, flat)


def loglik_rejection_recurrence(seq, sigma2, theta, alpha=None, r=None, quad=None, flat: bool = False) -> float:
    """Recurrence rejection model, transitions k = 2 .. n-1."""
    if not 0.0 <= theta <= 1.0:
        raise ParamOutOfRange("theta must lie in [0, 1]")
    lik = RegionLikelihood(seq, _grid_for(quad, alpha, seq.window), "recurrence", r)
    if (theta == 0.0 and lik.n_in) or (theta == 1.0 and lik.n_out):
        raise ThetaOnBoundaryWithMismatch(
            f"theta={theta} but {lik.n_in} near and {lik.n_out} empty-area transitions observed")
    return lik.loglik(sigma2, theta, 1.0 - theta, flat)


def loglik_adapted(seq, tau, kappa, alpha=None, coverage_type: str = "hull", quad=None,
                   r: float | None = None) -> float:
    """History-adapted model, transitions k = 2 .. n-1."""
    lik = AdaptedLikelihood(seq, _grid_for(quad, alpha, seq.window), coverage_type, r)
    return lik.loglik(tau, kappa)


def loglik_table1(seq, model: int, sigma2=None, theta=0.5, alpha=None, r=None, quad=None) -> float:
    """The four nested recurrence submodels: 1 = H, 2 = H+C, 3 = H+S, 4 = H+C+S."""
    if model == 1:
        return loglik_binomial(seq, alpha, quad, start=2)
    if model == 2:
        return loglik_random_walk(seq, sigma2, alpha, quad, start=2)
    if model == 3:
        return loglik_rejection_recurrence(seq, None, theta, alpha, r, quad, flat=True)
    if model == 4:
        return loglik_rejection_recurrence(seq, sigma2, theta, alpha, r, quad)
    raise ValueError(f"model must be 1..4, got {model}")


# -- fitting -------------------------------------------------------------------


def _steps(start, stop, step):
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def default_sigma_grid(window) -> list[float]:
    """60, 80, ..., 400 for pixel-scale windows, else 0.05, 0.10, ..., 1.00."""
    if max(window.width, window.height) >= 100:
        return [float(v) for v in _steps(60, 400, 20)]
    return _steps(0.05, 1.0, 0.05)


def default_interaction_grid() -> list[float]:
    return _steps(0.05, 0.95, 0.05)


def default_kappa_grid() -> list[float]:
    return _steps(0.0, 8.0, 0.5)


_NULL_VALUE = {
    Family.REJECTION_HULL: 1.0,
    Family.REJECTION_BALL: 1.0,
    Family.REJECTION_RECURRENCE: 0.5,
    Family.HISTORY_ADAPTED: 0.0,
}

_CONDITION_ON = {
    Family.REJECTION_HULL: 1,
    Family.REJECTION_BALL: 1,
    Family.REJECTION_RECURRENCE: 2,
    Family.HISTORY_ADAPTED: 2,
}


@dataclass
class FitResult:
    family: Family
    estimates: dict
    loglik: float
    grids: dict
    trace: list
    converged: bool
    iterations: int
    n: int
    options: dict = field(default_factory=dict)

    @property
    def conditioned_on(self) -> int:
        return _CONDITION_ON[self.family]

    def model_spec(self) -> ModelSpec:
        e, o = self.estimates, self.options
        fam = self.family
        if fam is Family.HISTORY_ADAPTED:
            return ModelSpec.history_adapted(e["tau"], e["kappa"], o.get("coverage", "hull"), o.get("r"))
        sigma2 = None if o.get("flat") else e["sigma"] ** 2
        if fam is Family.REJECTION_RECURRENCE:
            return ModelSpec.rejection_recurrence(sigma2, e["theta"], o["r"], flat=o.get("flat", False))
        if fam is Family.REJECTION_BALL:
            return ModelSpec.rejection_ball(sigma2, e["rho"], o["r"], flat=o.get("flat", False))
        return ModelSpec.rejection_hull(sigma2, e["rho"], flat=o.get("flat", False))

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "estimates": self.estimates,
            "loglik": self.loglik,
            "grids": self.grids,
            "trace": self.trace,
            "converged": self.converged,
            "iterations": self.iterations,
            "n": self.n,
            "options": self.options,
        }


def _argmax_first(values) -> int:
    best, best_i = -math.inf, 0
    for i, v in enumerate(values):
        if v > best:
            best, best_i = v, i
    return best_i


def _closest(grid, value) -> int:
    d = [abs(g - value) for g in grid]
    return d.index(min(d))


def fit_profile(seq: FixationSequence, family, sigma_grid=None, interaction_grid=None,
                alpha: SaliencyMap | None = None, quad: QuadratureGrid | None = None,
                max_iter: int = 10, *, r: float | None = None, coverage: str = "hull",
                flat: bool = False) -> FitResult:
    """Coordinate-descent maximisation of the log-likelihood over two grids.

    For the rejection families the first grid holds kernel standard
    deviations (squared internally) and the second rho or theta; ``flat=True``
    drops the kernel (first grid ignored). For the history-adapted family the
    grids hold tau (a variance) and kappa. Each sweep maximises over the first
    grid at the current second coordinate and then over the second grid;
    iteration stops at a grid fixed point or after ``max_iter`` sweeps. Ties
    go to the smaller grid value.
    """
    family = Family(family)
    if family not in _NULL_VALUE:
        raise ValueError(f"cannot fit family {family.value}")
    quad = _grid_for(quad, alpha, seq.window)
    w = seq.window
    adapted = family is Family.HISTORY_ADAPTED
    if sigma_grid is None:
        sigma_grid = [g * g for g in default_sigma_grid(w)] if adapted else default_sigma_grid(w)
    if interaction_grid is None:
        interaction_grid = default_kappa_grid() if adapted else default_interaction_grid()
    first = [None] if (flat and not adapted) else sorted(float(v) for v in sigma_grid)
    second = sorted(float(v) for v in interaction_grid)
    if not first or not second:
        raise GazeWalkError("parameter grids must be non-empty")

    if adapted:
        lik = AdaptedLikelihood(seq, quad, coverage, r)

        def ll(i, j):
            return lik.loglik(first[i], second[j])
        names = ("tau", "kappa")
    else:
        region = {Family.REJECTION_HULL: "hull", Family.REJECTION_BALL: "ball",
                  Family.REJECTION_RECURRENCE: "recurrence"}[family]
        lik = RegionLikelihood(seq, quad, region, r)
        recur = family is Family.REJECTION_RECURRENCE

        def ll(i, j):
            v = second[j]
            var = None if first[i] is None else first[i] ** 2
            try:
                return lik.loglik(var, v, 1.0 - v if recur else 1.0, flat)
            except ZeroMass:
                return -math.inf
        names = ("sigma", "theta" if recur else "rho")

    cache: dict = {}

    def value(i, j):
        if (i, j) not in cache:
            cache[(i, j)] = ll(i, j)
        return cache[(i, j)]

    j = _closest(second, _NULL_VALUE[family])
    i = 0
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        prev = (i, j)
        i = _argmax_first([value(a, j) for a in range(len(first))])
        trace.append({"step": names[0], names[0]: first[i], names[1]: second[j], "loglik": value(i, j)})
        j = _argmax_first([value(i, b) for b in range(len(second))])
        trace.append({"step": names[1], names[0]: first[i], names[1]: second[j], "loglik": value(i, j)})
        if (i, j) == prev:
            converged = True
            break
    best = value(i, j)
    if best == -math.inf:
        raise DegenerateLikelihood("every visited grid point has zero likelihood")
    estimates = {names[0]: first[i], names[1]: second[j]}
    if first[i] is None:
        estimates.pop(names[0])
    options = {"flat": flat, "r": r}
    if adapted:
        options = {"coverage": coverage, "r": r}
    grids = {names[0]: first if first != [None] else [], names[1]: second}
    return FitResult(family, estimates, best, grids, trace, converged, it, len(seq), options)


def fit_table1(seq, model: int, sigma_grid=None, theta_grid=None, alpha=None, quad=None,
               r: float | None = None, max_iter: int = 10) -> FitResult:
    """Fit one of the four nested recurrence submodels (1 = H, 2 = H+C, 3 = H+S, 4 = H+C+S)."""
    if model not in (1, 2, 3, 4):
        raise ValueError(f"model must be 1..4, got {model}")
    flat = model in (1, 3)
    if model in (1, 2):
        theta_grid = [0.5]
    res = fit_profile(seq, Family.REJECTION_RECURRENCE, sigma_grid, theta_grid, alpha, quad,
                      max_iter, r=r, flat=flat)
    res.options["model"] = model
    return res


# -- bootstrap -----------------------------------------------------------------


@dataclass
class BootstrapCI:
    intervals: dict
    level: float
    B: int
    replicates: list
    failures: list

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "B": self.B,
            "intervals": {k: {"lower": lo, "upper": hi} for k, (lo, hi) in self.intervals.items()},
            "replicates": self.replicates,
            "failures": self.failures,
        }


def percentile_interval(values, level: float) -> tuple[float, float]:
    """Type-1 (inverse empirical CDF) quantiles at (1 -/+ level) / 2."""
    v = np.asarray(values, dtype=float)
    lo, hi = np.quantile(v, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], method="inverted_cdf")
    return float(lo), float(hi)


def bootstrap_ci(seq: FixationSequence, fitted: FitResult, B: int = 20, level: float = 0.90,
                 rng: RngSpec | int = 0, quad: QuadratureGrid | None = None,
                 alpha: SaliencyMap | None = None, max_iter: int = 10,
                 workers: int = 1) -> BootstrapCI:
    """Parametric bootstrap: simulate B sequences from the fit, refit each, take percentiles.

    Replicates reuse the fit's grids and condition on the same leading
    observed points. Replicate b uses stream b of the seed. Failed replicates
    are listed in ``failures`` rather than dropped silently.
    """
    if B < 2:
        raise GazeWalkError("need B >= 2 bootstrap replicates")
    if not 0.0 < level < 1.0:
        raise ParamOutOfRange("level must lie in (0, 1)")
    seed = rng.seed if isinstance(rng, RngSpec) else int(rng)
    quad = _grid_for(quad, alpha, seq.window)
    alpha = quad.alpha_map
    spec = fitted.model_spec()
    first = seq.points[: fitted.conditioned_on]
    o = fitted.options
    fam = fitted.family
    sigma_grid = fitted.grids.get("tau" if fam is Family.HISTORY_ADAPTED else "sigma") or None
    inter_name = [k for k in fitted.grids if k not in ("sigma", "tau")][0]
    inter_grid = fitted.grids[inter_name]

    def one(b):
        sim = simulate(SimulationConfig(len(seq), spec, alpha, RngSpec(seed, b), first))
        kw = {"coverage": o.get("coverage", "hull")} if fam is Family.HISTORY_ADAPTED else {"flat": o.get("flat", False)}
        res = fit_profile(sim, fam, sigma_grid, inter_grid, None, quad, max_iter, r=o.get("r"), **kw)
        return res.estimates

    replicates, failures = [], []
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(one, b) for b in range(B)]
            outcomes = []
            for b, f in enumerate(futures):
                try:
                    outcomes.append((b, f.result(), None))
                except GazeWalkError as exc:
                    outcomes.append((b, None, exc))
    else:
        outcomes = []
        for b in range(B):
            try:
                outcomes.append((b, one(b), None))
            except GazeWalkError as exc:
                outcomes.append((b, None, exc))
    for b, est, exc in outcomes:
        if exc is None:
            replicates.append(est)
        else:
            failures.append({"replicate": b, "error": f"{type(exc).__name__}: {exc}"})
    if not replicates:
        raise GazeWalkError(f"all {B} bootstrap replicates failed")
    intervals = {}
    for name in fitted.estimates:
        intervals[name] = percentile_interval([e[name] for e in replicates], level)
    return BootstrapCI(intervals, level, B, replicates, failures)
