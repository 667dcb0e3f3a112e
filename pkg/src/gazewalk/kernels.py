"""Truncated Gaussian transition kernel on a rectangular window."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import truncnorm

from .core import ParamOutOfRange, Window, as_points


@dataclass(frozen=True)
class KernelParams:
    variance: float | None = None
    flat: bool = False

    def __post_init__(self):
        if not self.flat and (self.variance is None or not self.variance > 0):
            raise ParamOutOfRange(f"kernel variance must be positive, got {self.variance}")


def kernel_unnorm(center, x, p: KernelParams):
    """exp(-|center - x|^2 / (2 variance)); identically one for the flat kernel."""
    arr = np.asarray(x, dtype=float)
    X = as_points(arr)
    if p.flat:
        out = np.ones(len(X))
    else:
        c = np.asarray(center, dtype=float)
        d2 = ((X - c) ** 2).sum(axis=1)
        out = np.exp(-0.5 * d2 / p.variance)
    return float(out[0]) if arr.ndim == 1 else out


def axis_mass(lo: float, hi: float, centre, sigma: float):
    """Phi((hi - centre)/sigma) - Phi((lo - centre)/sigma), computed on the shorter tail."""
    centre = np.asarray(centre, dtype=float)
    zl = (lo - centre) / sigma
    zh = (hi - centre) / sigma
    # For intervals entirely in the right tail, use the mirrored form to avoid cancellation.
    right = zl > 0
    out = ndtr(zh) - ndtr(zl)
    if np.any(right):
        out = np.where(right, ndtr(-zl) - ndtr(-zh), out)
    return out


def kernel_norm_const(center, p: KernelParams, w: Window) -> float:
    """Integral of ``kernel_unnorm(center, .)`` over ``w``, in closed form."""
    if p.flat:
        return w.area
    s = math.sqrt(p.variance)
    cx, cy = float(center[0]), float(center[1])
    return float(2.0 * math.pi * p.variance * axis_mass(w.a, w.b, cx, s) * axis_mass(w.c, w.d, cy, s))


def _truncnorm_axis(rng, lo, hi, centre, sigma, size):
    zl = (lo - centre) / sigma
    zh = (hi - centre) / sigma
    u = rng.random(size)
    if min(abs(zl), abs(zh)) > 30 and zl * zh > 0:
        # both CDF values underflow; scipy's tail-aware quantile takes over
        z = truncnorm.ppf(u, zl, zh)
    elif zl > 0:  # mirror onto the left tail for precision
        pl, ph = ndtr(-zh), ndtr(-zl)
        z = -ndtri(pl + u * (ph - pl))
    else:
        pl, ph = ndtr(zl), ndtr(zh)
        z = ndtri(pl + u * (ph - pl))
    return np.clip(centre + sigma * z, lo, hi)


def sample_kernel(center, p: KernelParams, w: Window, rng: np.random.Generator, size: int | None = None):
    """Exact draws from the window-truncated kernel (uniform on ``w`` when flat).

    The truncated isotropic Gaussian factorises over the axes, so each
    coordinate is drawn by inverse-CDF sampling of a truncated normal.
    """
    m = 1 if size is None else int(size)
    if p.flat:
        xs = w.a + w.width * rng.random(m)
        ys = w.c + w.height * rng.random(m)
    else:
        s = math.sqrt(p.variance)
        xs = _truncnorm_axis(rng, w.a, w.b, float(center[0]), s, m)
        ys = _truncnorm_axis(rng, w.c, w.d, float(center[1]), s, m)
    out = np.column_stack([xs, ys])
    return out[0] if size is None else out


def adapted_width(tau: float, kappa: float, coverage: float, window_area: float) -> float:
    """Kernel variance tau * exp(-kappa * S / |W|) for coverage S."""
    if not tau > 0:
        raise ParamOutOfRange(f"tau must be positive, got {tau}")
    if not kappa >= 0:
        raise ParamOutOfRange(f"kappa must be non-negative, got {kappa}")
    if not window_area > 0:
        raise ParamOutOfRange("window area must be positive")
    # allow round-off above |W| from raster/exact coverage
    if coverage < 0 or coverage > window_area * (1 + 1e-9):
        raise ParamOutOfRange(f"coverage {coverage} outside [0, {window_area}]")
    return tau * math.exp(-kappa * coverage / window_area)
