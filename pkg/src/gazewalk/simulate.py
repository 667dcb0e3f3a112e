"""Sequential accept-reject simulation of the fixation models."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    Family,
    FixationSequence,
    GazeWalkError,
    ModelSpec,
    NonTermination,
    RngSpec,
    Window,
    ZeroMass,
    as_points,
    derive_rng,
)
from .heterogeneity import SaliencyMap, constant_map
from .kernels import sample_kernel
from .models import HistoryState, kernel_params, reweight

MAX_CONSECUTIVE_REJECTIONS = 1_000_000
_MAX_BATCH = 4096


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Everything needed to generate one sequence.

    With ``first_points=None`` the first location is drawn from the scaled
    heterogeneity; otherwise the given points open the sequence verbatim.
    """

    n: int
    model: ModelSpec
    alpha: SaliencyMap
    rng: RngSpec
    first_points: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise GazeWalkError("n must be at least 1")
        if self.first_points is not None:
            fp = as_points(self.first_points).copy()
            if not self.alpha.window.contains(fp).all():
                raise GazeWalkError("conditioning points must lie in the window")
            if len(fp) > self.n:
                raise GazeWalkError("more conditioning points than n")
            fp.setflags(write=False)
            object.__setattr__(self, "first_points", fp)

    @property
    def window(self):
        return self.alpha.window

    def with_stream(self, stream: int) -> "SimulationConfig":
        return SimulationConfig(self.n, self.model, self.alpha, RngSpec(self.rng.seed, stream),
                                self.first_points)


def _accept_alpha(alpha: SaliencyMap, X: np.ndarray, rng) -> np.ndarray:
    if alpha.is_constant:
        return np.ones(len(X), dtype=bool)
    amax = alpha.max
    if amax <= 0:
        raise ZeroMass("saliency map is identically zero")
    return rng.random(len(X)) < alpha(X) / amax


def sample_first(alpha: SaliencyMap, w, rng: np.random.Generator, size: int | None = None):
    """Draw with density proportional to alpha: uniform proposals, accept with alpha/max alpha."""
    if alpha.max <= 0:
        raise ZeroMass("saliency map is identically zero")
    m = 1 if size is None else int(size)
    out = []
    got = 0
    batch = max(8, min(_MAX_BATCH, 2 * m))
    misses = 0
    while got < m:
        X = np.column_stack([w.a + w.width * rng.random(batch), w.c + w.height * rng.random(batch)])
        ok = _accept_alpha(alpha, X, rng)
        acc = X[ok]
        if len(acc) == 0:
            misses += batch
            if misses >= MAX_CONSECUTIVE_REJECTIONS:
                raise NonTermination("first-point sampler rejected 1e6 consecutive proposals")
            batch = min(_MAX_BATCH, batch * 2)
            continue
        misses = 0
        out.append(acc[: m - got])
        got += len(out[-1])
    res = np.concatenate(out)
    return res[0] if size is None else res


def sample_transitions(spec: ModelSpec, alpha: SaliencyMap, state: HistoryState,
                       rng: np.random.Generator, size: int | None = None):
    """Draw from f_{k+1}(. | history) without its normalising constant.

    Proposals come from the window-truncated kernel around the current point,
    pass a first test with probability alpha(x)/max alpha and a second with
    the reweighting probability.
    """
    m = 1 if size is None else int(size)
    w = state.window
    kp = kernel_params(spec, state)
    centre = state.current
    out = []
    got = 0
    batch = 8 if m == 1 else min(_MAX_BATCH, 2 * m)
    misses = 0
    while got < m:
        X = sample_kernel(centre, kp, w, rng, batch)
        ok = _accept_alpha(alpha, X, rng)
        if spec.family in (Family.REJECTION_HULL, Family.REJECTION_BALL, Family.REJECTION_RECURRENCE):
            pi = reweight(spec, state, X)
            ok &= rng.random(batch) < pi
        acc = X[ok]
        if len(acc) == 0:
            misses += batch
            if misses >= MAX_CONSECUTIVE_REJECTIONS:
                raise NonTermination(
                    f"transition sampler rejected {misses} consecutive proposals at k={state.k}")
            batch = min(_MAX_BATCH, batch * 2)
            continue
        misses = 0
        out.append(acc[: m - got])
        got += len(out[-1])
    res = np.concatenate(out)
    return res[0] if size is None else res


def simulate(cfg: SimulationConfig, rng: np.random.Generator | None = None) -> FixationSequence:
    if rng is None:
        rng = derive_rng(cfg.rng)
    spec, alpha, w = cfg.model, cfg.alpha, cfg.window
    state = HistoryState(w, r=spec.r)
    if cfg.first_points is not None:
        for p in cfg.first_points:
            state.append(p)
    if state.k == 0:
        state.append(sample_first(alpha, w, rng))
    while state.k < cfg.n:
        if spec.family is Family.BINOMIAL:
            state.append(sample_first(alpha, w, rng))
        else:
            state.append(sample_transitions(spec, alpha, state, rng))
    return FixationSequence(state.points, w)


def simulate_batch(cfg: SimulationConfig, count: int, workers: int = 1) -> list[FixationSequence]:
    """``count`` sequences on streams ``0 .. count-1`` of ``cfg.rng.seed``."""
    if count < 1:
        raise GazeWalkError("count must be at least 1")
    cfgs = [cfg.with_stream(i) for i in range(count)]
    if workers <= 1:
        return [simulate(c) for c in cfgs]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(simulate, cfgs))


# The nine unit-square illustration models: hull rejection (a-c), recurrence
# rejection (d-f) and hull-adapted kernels (g-i). a, d and g are random walks.
SYNTHETIC_START = (0.22, 0.41)
SYNTHETIC_RADIUS = 0.1


def synthetic_model(name: str) -> ModelSpec:
    s2, r = 0.3, SYNTHETIC_RADIUS
    table = {
        "a": lambda: ModelSpec.rejection_hull(s2, 1.0),
        "b": lambda: ModelSpec.rejection_hull(s2, 0.1),
        "c": lambda: ModelSpec.rejection_hull(s2, 0.5),
        "d": lambda: ModelSpec.rejection_recurrence(s2, 0.5, r),
        "e": lambda: ModelSpec.rejection_recurrence(s2, 0.1, r),
        "f": lambda: ModelSpec.rejection_recurrence(s2, 0.9, r),
        "g": lambda: ModelSpec.history_adapted(0.3, 0.0, "hull"),
        "h": lambda: ModelSpec.history_adapted(0.3, 2.0, "hull"),
        "i": lambda: ModelSpec.history_adapted(0.3, 4.0, "hull"),
    }
    if name not in table:
        raise GazeWalkError(f"unknown synthetic model {name!r}; expected one of a..i")
    return table[name]()


def synthetic_config(name: str, seed: int, n: int = 100) -> SimulationConfig:
    """Constant saliency on the unit square, opening at the fixed start point."""
    return SimulationConfig(n, synthetic_model(name), constant_map(Window.unit()), RngSpec(seed),
                            [SYNTHETIC_START])
