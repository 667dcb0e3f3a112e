import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gazewalk.core import HistoryTooShort, ModelSpec, Window, ZeroDensityAtPoint, ZeroMass
from gazewalk.geometry import ball_union_area, convex_hull
from gazewalk.heterogeneity import SaliencyMap, constant_map
from gazewalk.kernels import KernelParams, kernel_norm_const
from gazewalk.models import (
    HistoryState,
    reweight,
    reweight_hull,
    reweight_recurrence,
    transition_logpdf,
    transition_norm_const,
    transition_unnorm,
)
from gazewalk.quadrature import QuadratureGrid

from oracles import fine_grid_integral

UNIT = Window.unit()
ONE = constant_map(UNIT)
Q = QuadratureGrid(UNIT, 64, 64, ONE)
TRIANGLE = [(0.2, 0.2), (0.8, 0.2), (0.5, 0.8)]


def _random_alpha(seed):
    return SaliencyMap(UNIT, 0.2 + np.random.default_rng(seed).random((10, 10)))


def test_reweight_hull():
    s = HistoryState(UNIT, TRIANGLE)
    assert reweight_hull(s, (0.95, 0.95), 0.1) == 1.0
    assert reweight_hull(s, (0.5, 0.4), 0.1) == 0.1
    assert reweight_hull(s, (0.5, 0.4), 1.0) == 1.0
    assert reweight_hull(s, (0.2, 0.2), 0.3) == 0.3  # vertex counts as inside


def test_reweight_recurrence():
    s = HistoryState(UNIT, [(0.2, 0.2), (0.8, 0.8), (0.5, 0.5)])
    assert reweight_recurrence(s, (0.1, 0.9), 0.5, 0.1) == 0.5
    assert reweight_recurrence(s, (0.21, 0.2), 0.9, 0.1) == 0.9
    assert_allclose(reweight_recurrence(s, (0.1, 0.9), 0.1, 0.1), 0.9)
    # the current point does not count
    assert_allclose(reweight_recurrence(s, (0.5, 0.5), 0.9, 0.1), 0.1)
    with pytest.raises(HistoryTooShort):
        reweight_recurrence(HistoryState(UNIT, [(0.2, 0.2)]), (0.5, 0.5), 0.9, 0.1)


def test_hull_example_value():
    s = HistoryState(UNIT, TRIANGLE)
    spec = ModelSpec.rejection_hull(0.3, 0.1)
    assert_allclose(transition_unnorm(spec, ONE, s, (0.5, 0.5)), 0.1 * math.exp(-0.15), rtol=1e-14)
    assert_allclose(transition_unnorm(spec, ONE, s, (0.5, 0.5)), 0.0860708, atol=1e-7)
    norm = fine_grid_integral(lambda X: transition_unnorm(spec, ONE, s, X), (0, 1, 0, 1), 2048)
    assert_allclose(transition_logpdf(spec, None, s, (0.5, 0.5), Q), math.log(0.0860708) - math.log(norm),
                    atol=1e-3)


def test_binomial_and_random_walk_constants():
    s = HistoryState(UNIT, [(0.3, 0.3)])
    assert transition_unnorm(ModelSpec.binomial(), ONE, s, (0.9, 0.1)) == 1.0
    assert_allclose(transition_norm_const(ModelSpec.binomial(), ONE, s, Q), 1.0, rtol=1e-12)
    assert_allclose(transition_logpdf(ModelSpec.binomial(), ONE, s, (0.9, 0.1), Q), 0.0, atol=1e-12)
    spec = ModelSpec.random_walk(0.05)
    assert_allclose(transition_norm_const(spec, ONE, s, Q), kernel_norm_const((0.3, 0.3), KernelParams(0.05), UNIT),
                    rtol=1e-12)


def test_history_too_short():
    with pytest.raises(HistoryTooShort):
        transition_unnorm(ModelSpec.random_walk(0.1), ONE, HistoryState(UNIT), (0.5, 0.5))


def test_zero_density_and_zero_mass():
    alpha = SaliencyMap(UNIT, [[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
    s = HistoryState(UNIT, [(0.9, 0.5)])
    q = QuadratureGrid(UNIT, 32, 32, alpha)
    with pytest.raises(ZeroDensityAtPoint):
        transition_logpdf(ModelSpec.random_walk(0.1), alpha, s, (0.05, 0.5), q)
    zero = SaliencyMap(UNIT, np.zeros((2, 2)))
    with pytest.raises(ZeroMass):
        transition_norm_const(ModelSpec.random_walk(0.1), zero, s, QuadratureGrid(UNIT, 16, 16, zero))


SPECS = [
    ModelSpec.random_walk(0.02),
    ModelSpec.rejection_hull(0.05, 0.2),
    ModelSpec.rejection_ball(0.05, 0.1, 0.12),
    ModelSpec.rejection_recurrence(0.03, 0.9, 0.1),
    ModelSpec.rejection_recurrence(None, 0.2, 0.15, flat=True),
    ModelSpec.history_adapted(0.2, 3.0, "hull"),
    ModelSpec.history_adapted(0.2, 3.0, "ball", 0.1),
]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family.value)
def test_norm_const_matches_fine_grid(spec):
    alpha = _random_alpha(1)
    pts = np.random.default_rng(2).random((6, 2))
    s = HistoryState(UNIT, pts, r=spec.r)
    q = QuadratureGrid(UNIT, 64, 64, alpha)
    got = transition_norm_const(spec, alpha, s, q)
    ref = fine_grid_integral(lambda X: transition_unnorm(spec, alpha, s, X), (0, 1, 0, 1), 2048)
    assert abs(got - ref) / ref <= 1e-3


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.family.value)
def test_density_integrates_to_one(spec):
    alpha = _random_alpha(3)
    s = HistoryState(UNIT, np.random.default_rng(4).random((5, 2)), r=spec.r)
    q = QuadratureGrid(UNIT, 64, 64, alpha)
    total = fine_grid_integral(lambda X: np.exp(transition_logpdf(spec, alpha, s, X, q)), (0, 1, 0, 1), 1024)
    assert abs(total - 1.0) <= 1e-3


def test_hull_norm_const_grid_refinement():
    rng = np.random.default_rng(12)
    alpha = _random_alpha(5)
    s = HistoryState(UNIT, rng.random((8, 2)))
    spec = ModelSpec.rejection_hull(0.04, 0.1)
    q = QuadratureGrid(UNIT, 32, 32, alpha)
    a, b = transition_norm_const(spec, alpha, s, q), transition_norm_const(spec, alpha, s, q.refined(4))
    assert abs(a - b) / b <= 1e-3


def test_degenerate_families_equal_random_walk():
    alpha = _random_alpha(6)
    s = HistoryState(UNIT, np.random.default_rng(7).random((7, 2)), r=0.1)
    X = np.random.default_rng(8).random((50, 2))
    q = QuadratureGrid(UNIT, 48, 48, alpha)
    rw = transition_logpdf(ModelSpec.random_walk(0.05), alpha, s, X, q)
    for spec in (ModelSpec.rejection_hull(0.05, 1.0), ModelSpec.rejection_ball(0.05, 1.0, 0.1),
                 ModelSpec.rejection_recurrence(0.05, 0.5, 0.1), ModelSpec.history_adapted(0.05, 0.0)):
        assert_allclose(transition_logpdf(spec, alpha, s, X, q), rw, atol=1e-12)


def test_hull_odds_ratio():
    s = HistoryState(UNIT, [(0.3, 0.3), (0.7, 0.3), (0.5, 0.5)])
    spec = ModelSpec.rejection_hull(0.05, 0.25)
    inside, outside = (0.5, 0.4), (0.5, 0.6)  # both 0.1 from the current point
    d = transition_logpdf(spec, None, s, [outside, inside], Q)
    assert_allclose(math.exp(d[0] - d[1]), 4.0, rtol=1e-12)


def test_recurrence_odds_ratio():
    s = HistoryState(UNIT, [(0.3, 0.5), (0.5, 0.5)])
    spec = ModelSpec.rejection_recurrence(0.05, 0.8, 0.05)
    near, empty = (0.3, 0.5), (0.7, 0.5)
    d = transition_logpdf(spec, None, s, [near, empty], Q)
    assert_allclose(math.exp(d[0] - d[1]), 0.8 / 0.2, rtol=1e-12)


def test_recurrence_start_up_uses_random_walk():
    s = HistoryState(UNIT, [(0.4, 0.4)])
    X = np.random.default_rng(1).random((10, 2))
    a = transition_logpdf(ModelSpec.rejection_recurrence(0.05, 0.9, 0.1), None, s, X, Q)
    b = transition_logpdf(ModelSpec.random_walk(0.05), None, s, X, Q)
    assert_allclose(a, b, atol=1e-12)


def test_vectorised_reweight_matches_scalar():
    s = HistoryState(UNIT, TRIANGLE, r=0.2)
    X = np.random.default_rng(2).random((30, 2))
    for spec in (ModelSpec.rejection_hull(0.1, 0.3), ModelSpec.rejection_ball(0.1, 0.3, 0.2),
                 ModelSpec.rejection_recurrence(0.1, 0.7, 0.2)):
        v = reweight(spec, s, X)
        assert_allclose(v, [float(reweight(spec, s, x)[0]) for x in X])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=1, max_size=30))
def test_history_caches_match_recomputation(pts):
    s = HistoryState(UNIT, r=0.1)
    for i, p in enumerate(pts):
        s.append(p)
        assert s.hull == convex_hull(pts[: i + 1])
        assert s.hull_area == convex_hull(pts[: i + 1]).area
        assert s.ball_area() == ball_union_area(pts[: i + 1], 0.1, UNIT)
    assert HistoryState.from_points(UNIT, pts).hull == s.hull
