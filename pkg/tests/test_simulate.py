import importlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_array_equal
from scipy import stats

simmod = importlib.import_module("gazewalk.simulate")

from gazewalk.core import ModelSpec, NonTermination, RngSpec, Window, ZeroMass, derive_rng, validate_sequence
from gazewalk.heterogeneity import SaliencyMap, constant_map
from gazewalk.models import HistoryState, transition_logpdf, transition_unnorm
from gazewalk.quadrature import QuadratureGrid
from gazewalk.simulate import (
    SimulationConfig,
    sample_first,
    sample_transitions,
    simulate,
    simulate_batch,
    synthetic_config,
    synthetic_model,
)
from gazewalk.summaries import cumulative_recurrence_curve, hull_coverage_curve

UNIT = Window.unit()
ONE = constant_map(UNIT)


def _hist(X, bins):
    return np.histogram2d(X[:, 1], X[:, 0], bins=bins, range=[[0, 1], [0, 1]])[0]


def test_sample_first_uniform():
    X = sample_first(ONE, UNIT, derive_rng(RngSpec(1)), 100_000)
    assert stats.chisquare(_hist(X, 10).ravel()).pvalue > 0.01


def test_sample_first_left_half():
    alpha = SaliencyMap(UNIT, [[1.0, 0.0, 0.0, 0.0]] * 2)
    X = sample_first(alpha, UNIT, derive_rng(RngSpec(2)), 20_000)
    assert np.mean(X[:, 0] < 0.5) >= 0.99


def test_sample_first_matches_map():
    alpha = SaliencyMap(UNIT, np.random.default_rng(0).random((6, 6))).scaled()
    X = sample_first(alpha, UNIT, derive_rng(RngSpec(3)), 100_000)
    # expected cell masses of the bilinear surface on a fine midpoint grid
    g = (np.arange(400) + 0.5) / 400
    GX, GY = np.meshgrid(g, g)
    dens = alpha(np.column_stack([GX.ravel(), GY.ravel()])).reshape(400, 400)
    p = dens.reshape(10, 40, 10, 40).sum(axis=(1, 3))
    expected = p / p.sum() * len(X)
    assert stats.chisquare(_hist(X, 10).ravel(), expected.ravel()).pvalue > 0.01


def test_sample_first_zero_map():
    with pytest.raises(ZeroMass):
        sample_first(SaliencyMap(UNIT, np.zeros((2, 2))), UNIT, derive_rng(RngSpec(0)))


@pytest.mark.parametrize("spec", [ModelSpec.rejection_hull(0.05, 1.0),
                                  ModelSpec.rejection_recurrence(0.05, 0.5, 0.1),
                                  ModelSpec.history_adapted(0.05, 0.0)],
                         ids=["rho=1", "theta=0.5", "kappa=0"])
def test_degenerate_first_transition_matches_random_walk(spec):
    state = HistoryState(UNIT, [(0.3, 0.6), (0.4, 0.5), (0.35, 0.45)], r=spec.r)
    X = sample_transitions(spec, ONE, state, derive_rng(RngSpec(5)), 100_000)
    g = (np.arange(800) + 0.5) / 800
    GX, GY = np.meshgrid(g, g)
    q = QuadratureGrid(UNIT, 64, 64, ONE)
    d = np.exp(transition_logpdf(ModelSpec.random_walk(0.05), ONE, state,
                                 np.column_stack([GX.ravel(), GY.ravel()]), q)).reshape(800, 800)
    p = d.reshape(20, 40, 20, 40).sum(axis=(1, 3))
    expected = p / p.sum() * len(X)
    assert stats.chisquare(_hist(X, 20).ravel(), expected.ravel()).pvalue > 0.01


@pytest.mark.parametrize("sigma2,rho", [(0.01, 0.0), (0.3, 0.5), (1.0, 0.05)])
def test_hull_sampler_settings(sigma2, rho):
    """Three settings of the hull family against the model density."""
    alpha = SaliencyMap(UNIT, 0.4 + np.random.default_rng(1).random((5, 5)))
    spec = ModelSpec.rejection_hull(sigma2, rho)
    state = HistoryState(UNIT, [(0.3, 0.3), (0.6, 0.35), (0.45, 0.6)])
    X = sample_transitions(spec, alpha, state, derive_rng(RngSpec(6)), 50_000)
    g = (np.arange(800) + 0.5) / 800
    GX, GY = np.meshgrid(g, g)
    d = transition_unnorm(spec, alpha, state, np.column_stack([GX.ravel(), GY.ravel()])).reshape(800, 800)
    p = d.reshape(20, 40, 20, 40).sum(axis=(1, 3))
    expected = p / p.sum() * len(X)
    keep = expected.ravel() > 0
    obs = _hist(X, 20).ravel()
    assert obs[~keep].sum() == 0
    assert stats.chisquare(obs[keep], expected.ravel()[keep] * obs.sum() / expected.ravel()[keep].sum()).pvalue > 0.01


def test_simulate_basic_contract():
    cfg = SimulationConfig(50, ModelSpec.rejection_recurrence(0.05, 0.8, 0.1), ONE, RngSpec(9),
                           [(0.1, 0.2), (0.3, 0.4)])
    seq = simulate(cfg)
    assert len(seq) == 50
    assert_array_equal(seq.points[:2], [[0.1, 0.2], [0.3, 0.4]])
    validate_sequence(seq)
    assert simulate(cfg) == seq
    assert simulate(cfg.with_stream(1)) != seq


def test_simulate_n1_and_binomial():
    seq = simulate(SimulationConfig(1, ModelSpec.random_walk(0.1), ONE, RngSpec(1)))
    assert len(seq) == 1
    seq = simulate(SimulationConfig(30, ModelSpec.binomial(), ONE, RngSpec(1)))
    assert len(seq) == 30


def test_simulate_batch():
    cfg = SimulationConfig(20, ModelSpec.rejection_hull(0.1, 0.3), ONE, RngSpec(4))
    batch = simulate_batch(cfg, 5)
    assert len(batch) == 5
    assert batch[0] == simulate(cfg)
    assert simulate_batch(cfg, 1)[0] == simulate(cfg.with_stream(0))
    assert simulate_batch(cfg, 5, workers=3) == batch
    assert len({tuple(s.points[-1]) for s in batch}) == 5


def test_config_validation():
    with pytest.raises(ValueError):
        SimulationConfig(0, ModelSpec.random_walk(0.1), ONE, RngSpec(0))
    with pytest.raises(ValueError):
        SimulationConfig(5, ModelSpec.random_walk(0.1), ONE, RngSpec(0), [(1.5, 0.5)])


def test_non_termination(monkeypatch):
    monkeypatch.setattr(simmod, "MAX_CONSECUTIVE_REJECTIONS", 5_000)
    alpha = SaliencyMap(UNIT, _corner())
    cfg = SimulationConfig(3, ModelSpec.random_walk(1e-6), alpha, RngSpec(0), [(0.05, 0.05)])
    with pytest.raises(NonTermination):
        simulate(cfg)


def _corner():
    v = np.zeros((10, 10))
    v[-1, -1] = 1.0
    return v


def test_synthetic_models():
    assert synthetic_model("b") == ModelSpec.rejection_hull(0.3, 0.1)
    assert synthetic_model("f") == ModelSpec.rejection_recurrence(0.3, 0.9, 0.1)
    assert synthetic_model("i") == ModelSpec.history_adapted(0.3, 4.0, "hull")
    with pytest.raises(ValueError):
        synthetic_model("z")
    seq = simulate(synthetic_config("e", 1))
    assert len(seq) == 100 and tuple(seq.points[0]) == (0.22, 0.41)


def test_fast_coverage_exceeds_random_walk():
    b = [hull_coverage_curve(s).values[-1] for s in simulate_batch(synthetic_config("b", 31), 5)]
    a = [hull_coverage_curve(s).values[-1] for s in simulate_batch(synthetic_config("a", 32), 5)]
    assert np.mean(b) > np.mean(a)


def test_high_recurrence_above_random_walk_runs():
    f = [cumulative_recurrence_curve(s, 0.1).values[-1] for s in simulate_batch(synthetic_config("f", 33), 5)]
    d = [cumulative_recurrence_curve(s, 0.1).values[-1] for s in simulate_batch(synthetic_config("d", 34), 19)]
    assert np.mean(f) > max(d)


FAMILIES = [ModelSpec.binomial(), ModelSpec.random_walk(0.02), ModelSpec.rejection_hull(0.05, 0.1),
            ModelSpec.rejection_ball(0.05, 0.2, 0.1), ModelSpec.rejection_recurrence(0.05, 0.9, 0.1),
            ModelSpec.history_adapted(0.3, 4.0), ModelSpec.history_adapted(0.3, 2.0, "ball", 0.1)]


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(FAMILIES), st.integers(0, 2 ** 32), st.integers(1, 25))
def test_simulated_sequences_always_valid(spec, seed, n):
    w = Window(0, 4, 0, 3)
    alpha = SaliencyMap(w, 0.1 + np.random.default_rng(seed % 7).random((3, 4)))
    spec = spec if spec.r is None else ModelSpec(**{**spec.to_dict(), "r": 0.4})
    seq = simulate(SimulationConfig(n, spec, alpha, RngSpec(seed)))
    validate_sequence(seq)
    assert len(seq) == n
