import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import stats

from gazewalk.core import ParamOutOfRange, Window
from gazewalk.kernels import KernelParams, adapted_width, kernel_norm_const, kernel_unnorm, sample_kernel

from oracles import dblquad_kernel_norm

UNIT = Window.unit()


def test_kernel_unnorm_values():
    p = KernelParams(0.3)
    assert kernel_unnorm((0.2, 0.2), (0.2, 0.2), p) == 1.0
    assert_allclose(kernel_unnorm((0.5, 0.8), (0.5, 0.5), p), 0.8607079764250578, rtol=1e-14)
    assert kernel_unnorm((0.5, 0.8), (0.1, 0.1), KernelParams(flat=True)) == 1.0
    with pytest.raises(ParamOutOfRange):
        KernelParams(0.0)


def test_norm_const_limits():
    assert_allclose(kernel_norm_const((0.3, 0.7), KernelParams(1e6), UNIT), 1.0, rtol=1e-4)
    assert kernel_norm_const((0.3, 0.7), KernelParams(flat=True), Window(0, 2, 0, 3)) == 6.0


def test_norm_const_interior_narrow():
    got = kernel_norm_const((0.5, 0.5), KernelParams(0.0025), UNIT)
    assert_allclose(got, dblquad_kernel_norm((0.5, 0.5), 0.0025, (0, 1, 0, 1)), rtol=1e-8)
    assert_allclose(got, 2 * math.pi * 0.0025, rtol=1e-6)


@pytest.mark.parametrize("centre", [(0.5, 0.5), (0.0, 0.3), (1.0, 1.0)])
@pytest.mark.parametrize("sigma", [0.01, 0.1, 1.0, 10.0])
def test_norm_const_matches_adaptive_quadrature(centre, sigma):
    got = kernel_norm_const(centre, KernelParams(sigma ** 2), UNIT)
    assert_allclose(got, dblquad_kernel_norm(centre, sigma ** 2, (0, 1, 0, 1)), rtol=1e-6)


def test_norm_const_far_tail():
    # window far to the right of the centre: mirrored CDF keeps precision
    w = Window(9.0, 10.0, 0.0, 1.0)
    got = kernel_norm_const((9.0, 0.5), KernelParams(0.01), w)
    assert_allclose(got, dblquad_kernel_norm((9.0, 0.5), 0.01, (9, 10, 0, 1)), rtol=1e-6)


def test_flat_samples_uniform():
    rng = np.random.default_rng(1)
    X = sample_kernel((0.1, 0.1), KernelParams(flat=True), UNIT, rng, 100_000)
    counts, _, _ = np.histogram2d(X[:, 0], X[:, 1], bins=10, range=[[0, 1], [0, 1]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.01


def test_narrow_sample_mean():
    rng = np.random.default_rng(2)
    n = 100_000
    X = sample_kernel((0.5, 0.5), KernelParams(0.0025), UNIT, rng, n)
    assert np.all(np.abs(X.mean(axis=0) - 0.5) < 3 * 0.05 / math.sqrt(n))


def test_samples_match_density():
    rng = np.random.default_rng(3)
    c, p = (0.3, 0.6), KernelParams(0.3)
    X = sample_kernel(c, p, UNIT, rng, 100_000)
    counts, _, _ = np.histogram2d(X[:, 0], X[:, 1], bins=20, range=[[0, 1], [0, 1]])
    # exact cell probabilities from the separable CDF
    e = np.linspace(0, 1, 21)
    s = math.sqrt(0.3)
    px = np.diff(stats.norm.cdf((e - c[0]) / s))
    py = np.diff(stats.norm.cdf((e - c[1]) / s))
    expected = np.outer(px, py) * 2 * math.pi * 0.3 / kernel_norm_const(c, p, UNIT) * len(X)
    assert_allclose(expected.sum(), len(X), rtol=1e-12)
    assert stats.chisquare(counts.ravel(), expected.ravel()).pvalue > 0.01


def test_samples_in_window_far_tail():
    rng = np.random.default_rng(4)
    X = sample_kernel((0.0, 0.0), KernelParams(1e-4), Window(0.5, 1.0, 0.5, 1.0), rng, 1000)
    assert np.all((X >= 0.5) & (X <= 1.0))
    assert np.all(X < 0.51)


def test_adapted_width():
    assert adapted_width(0.3, 0.0, 0.7, 1.0) == 0.3
    assert adapted_width(0.3, 5.0, 0.0, 1.0) == 0.3
    assert_allclose(adapted_width(0.3, 2.0, 0.5, 1.0), 0.11036383235143269, rtol=1e-14)
    for bad in [(0.0, 1.0, 0.1, 1.0), (0.3, -1.0, 0.1, 1.0), (0.3, 1.0, 2.0, 1.0), (0.3, 1.0, -0.1, 1.0)]:
        with pytest.raises(ParamOutOfRange):
            adapted_width(*bad)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 5), st.floats(0, 10), st.floats(0, 1), st.floats(0, 1), st.floats(0.5, 4))
def test_adapted_width_ratio_depends_on_difference(tau, kappa, s1, s2, area):
    r = adapted_width(tau, kappa, s1 * area, area) / adapted_width(tau, kappa, s2 * area, area)
    assert_allclose(r, math.exp(-kappa * (s1 - s2)), rtol=1e-9)
    if s1 <= s2:
        assert adapted_width(tau, kappa, s1 * area, area) >= adapted_width(tau, kappa, s2 * area, area)
