"""Order-indexed summary statistics of fixation sequences and Monte Carlo envelopes.

Every curve has one value per point order k = 1..n. Coverage curves can be
normalised by the window area.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (
    FixationSequence,
    GazeWalkError,
    LengthMismatch,
    NonPositiveRadius,
    TagMismatch,
)
from .geometry import ball_union_area, convex_hull, recurrence_counts
from .simulate import SimulationConfig, simulate_batch

KINDS = ("hull_coverage", "ball_coverage", "scanpath_length", "cumulative_recurrence")


@dataclass(frozen=True)
class Statistic:
    """Tag naming a summary statistic together with its radius and normalisation."""

    kind: str
    r: float | None = None
    normalized: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic {self.kind!r}")
        if self.kind in ("ball_coverage", "cumulative_recurrence"):
            if self.r is None or not self.r > 0:
                raise NonPositiveRadius(f"{self.kind} needs a positive radius, got {self.r}")
        elif self.r is not None:
            raise ValueError(f"{self.kind} takes no radius")
        if self.normalized and self.kind not in ("hull_coverage", "ball_coverage"):
            raise ValueError("only coverage statistics can be normalised")

    @classmethod
    def hull_coverage(cls, normalized: bool = False):
        return cls("hull_coverage", None, normalized)

    @classmethod
    def ball_coverage(cls, r: float, normalized: bool = False):
        return cls("ball_coverage", r, normalized)

    @classmethod
    def scanpath_length(cls):
        return cls("scanpath_length")

    @classmethod
    def cumulative_recurrence(cls, r: float):
        return cls("cumulative_recurrence", r)

    @property
    def label(self) -> str:
        s = self.kind if self.r is None else f"{self.kind}(r={self.r:g})"
        return s + (" /|W|" if self.normalized else "")

    def compute(self, seq: FixationSequence) -> "SummaryCurve":
        if self.kind == "hull_coverage":
            return hull_coverage_curve(seq, self.normalized)
        if self.kind == "ball_coverage":
            return ball_coverage_curve(seq, self.r, self.normalized)
        if self.kind == "scanpath_length":
            return scanpath_length_curve(seq)
        return cumulative_recurrence_curve(seq, self.r)


@dataclass(frozen=True, eq=False)
class SummaryCurve:
    statistic: Statistic
    values: np.ndarray

    def __len__(self):
        return len(self.values)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)


def _curve(stat, values) -> SummaryCurve:
    v = np.asarray(values, dtype=float)
    v.setflags(write=False)
    return SummaryCurve(stat, v)


def hull_coverage_curve(seq: FixationSequence, normalized: bool = False) -> SummaryCurve:
    """Convex hull area of x_1..x_k; zero while k <= 2."""
    pts = seq.points
    out = np.zeros(len(pts))
    verts = pts[:0]
    for k in range(len(pts)):
        h = convex_hull(np.vstack([verts, pts[k:k + 1]]))
        verts = h.vertices
        if k >= 2:
            out[k] = h.area
    if normalized:
        out /= seq.window.area
    return _curve(Statistic.hull_coverage(normalized), out)


def ball_coverage_curve(seq: FixationSequence, r: float, normalized: bool = False) -> SummaryCurve:
    """Area of the union of radius-r disks around x_1..x_k, clipped to the window."""
    stat = Statistic.ball_coverage(r, normalized)
    pts = seq.points
    out = np.zeros(len(pts))
    for k in range(len(pts)):
        # a point already inside an earlier disk with the same centre adds nothing
        if k and np.any(np.all(pts[:k] == pts[k], axis=1)):
            out[k] = out[k - 1]
        else:
            out[k] = ball_union_area(pts[:k + 1], r, seq.window)
    # exact areas of nested unions can differ by round-off; keep the curve monotone
    out = np.maximum.accumulate(out)
    if normalized:
        out /= seq.window.area
    return _curve(stat, out)


def scanpath_length_curve(seq: FixationSequence) -> SummaryCurve:
    steps = np.linalg.norm(np.diff(seq.points, axis=0), axis=1)
    return _curve(Statistic.scanpath_length(), np.concatenate([[0.0], np.cumsum(steps)]))


def cumulative_recurrence_curve(seq: FixationSequence, r: float) -> SummaryCurve:
    """Value at k sums, over j = 2..k-1, the points among x_1..x_{j-1} within r of x_{j+1}."""
    stat = Statistic.cumulative_recurrence(r)
    pts = seq.points
    n = len(pts)
    inc = np.zeros(n)
    for k in range(2, n):  # 0-based k is the point x_{k+1}
        inc[k] = recurrence_counts(pts[:k - 1], pts[k], r)[0]
    return _curve(stat, np.cumsum(inc))


# -- envelopes -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnvelopeBand:
    statistic: Statistic
    lower: np.ndarray
    upper: np.ndarray
    M: int
    quantiles: tuple[float, float] | None = None

    def __len__(self):
        return len(self.lower)

    def contains(self, curve: SummaryCurve) -> np.ndarray:
        v = curve.values
        return (v >= self.lower) & (v <= self.upper)


def band_from_curves(curves, quantiles: tuple[float, float] | None = None) -> EnvelopeBand:
    """Pointwise min/max (or the given quantile pair) over replicate curves."""
    curves = list(curves)
    if len(curves) < 2:
        raise GazeWalkError("an envelope needs at least two curves")
    stat = curves[0].statistic
    n = len(curves[0])
    for c in curves:
        if c.statistic != stat:
            raise TagMismatch(f"{c.statistic.label} vs {stat.label}")
        if len(c) != n:
            raise LengthMismatch(f"curve lengths {len(c)} and {n} differ")
    V = np.vstack([c.values for c in curves])
    if quantiles is None:
        lo, hi = V.min(axis=0), V.max(axis=0)
    else:
        q0, q1 = quantiles
        if not 0.0 <= q0 <= q1 <= 1.0:
            raise ValueError("quantiles must satisfy 0 <= lower <= upper <= 1")
        lo, hi = np.quantile(V, [q0, q1], axis=0)
    for a in (lo, hi):
        a.setflags(write=False)
    return EnvelopeBand(stat, lo, hi, len(curves), quantiles)


def envelope(cfg: SimulationConfig, statistic: Statistic, M: int = 19,
             quantiles: tuple[float, float] | None = None, workers: int = 1) -> EnvelopeBand:
    """Simulate ``M`` sequences (streams 0..M-1 of the config seed) and band the statistic."""
    if M < 2:
        raise GazeWalkError("M must be at least 2")
    seqs = simulate_batch(cfg, M, workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            curves = list(ex.map(statistic.compute, seqs))
    else:
        curves = [statistic.compute(s) for s in seqs]
    return band_from_curves(curves, quantiles)


def band_exceedance(curve: SummaryCurve, band: EnvelopeBand) -> tuple[float, int | None]:
    """Share of orders k where the curve leaves the band, and the first such k (1-based).

    Values on the band boundary count as inside.
    """
    if curve.statistic != band.statistic:
        raise TagMismatch(f"curve is {curve.statistic.label}, band is {band.statistic.label}")
    if len(curve) != len(band):
        raise LengthMismatch(f"curve has {len(curve)} values, band {len(band)}")
    out = ~band.contains(curve)
    first = int(np.argmax(out)) + 1 if out.any() else None
    return float(out.mean()), first


# -- output ----------------------------------------------------------------------


def write_curve_csv(path, curve: SummaryCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "value"])
        for k, v in zip(curve.k, curve.values):
            w.writerow([int(k), repr(float(v))])


def write_band_csv(path, band: EnvelopeBand) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lower", "upper"])
        for k, (lo, hi) in enumerate(zip(band.lower, band.upper), start=1):
            w.writerow([k, repr(float(lo)), repr(float(hi))])


def plot_svg(path, curves=(), band: EnvelopeBand | None = None, title: str = "",
             width: int = 480, height: int = 320) -> None:
    """Minimal SVG line plot: a grey band plus one polyline per curve."""
    series = [c.values for c in curves]
    if band is not None:
        series += [band.lower, band.upper]
    if not series:
        raise GazeWalkError("nothing to plot")
    n = max(len(s) for s in series)
    ymin = min(float(np.min(s)) for s in series)
    ymax = max(float(np.max(s)) for s in series)
    if ymax <= ymin:
        ymax = ymin + 1.0
    pad = 40

    def xy(k, v):
        x = pad + (k - 1) / max(n - 1, 1) * (width - 2 * pad)
        y = height - pad - (v - ymin) / (ymax - ymin) * (height - 2 * pad)
        return f"{x:.2f},{y:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>']
    if band is not None:
        pts = [xy(k, v) for k, v in enumerate(band.upper, 1)]
        pts += [xy(k, v) for k, v in reversed(list(enumerate(band.lower, 1)))]
        parts.append(f'<polygon points="{" ".join(pts)}" fill="#cccccc" stroke="none"/>')
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]
    for i, c in enumerate(curves):
        pts = " ".join(xy(k, v) for k, v in enumerate(c.values, 1))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colours[i % len(colours)]}"'
                     ' stroke-width="1.2"/>')
    parts.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>')
    parts.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>')
    parts.append(f'<text x="{pad}" y="{height - 10}" font-size="11">k = 1..{n}</text>')
    parts.append(f'<text x="5" y="{pad - 8}" font-size="11">{ymin:.3g} .. {ymax:.3g}</text>')
    if title:
        parts.append(f'<text x="{width / 2}" y="18" font-size="13" text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
