"""Shared domain types, validation, randomness and CSV I/O."""

from __future__ import annotations

import csv
import enum
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np


class GazeWalkError(ValueError):
    """Base class for all domain errors raised by the package."""


class EmptySequence(GazeWalkError):
    pass


class EmptyInput(GazeWalkError):
    pass


class PointOutsideWindow(GazeWalkError):
    def __init__(self, index, point=None):
        self.index = index
        self.point = point
        super().__init__(f"point {index} {point} lies outside the window")


class NonFiniteCoordinate(GazeWalkError):
    def __init__(self, index):
        self.index = index
        super().__init__(f"point {index} has a non-finite coordinate")


class NonPositiveRadius(GazeWalkError):
    pass


class NonPositiveBandwidth(GazeWalkError):
    pass


class IndexOutOfRange(GazeWalkError):
    pass


class ParamOutOfRange(GazeWalkError):
    pass


class HistoryTooShort(GazeWalkError):
    pass


class ZeroMass(GazeWalkError):
    pass


class ZeroDensityAtPoint(GazeWalkError):
    pass


class ZeroDensityAtObservation(GazeWalkError):
    def __init__(self, k, reason=""):
        self.k = k
        super().__init__(f"observation {k + 1} has zero model density {reason}".strip())


class ThetaOnBoundaryWithMismatch(GazeWalkError):
    pass


class DegenerateLikelihood(GazeWalkError):
    pass


class NoAuxiliaryData(GazeWalkError):
    pass


class NonTermination(GazeWalkError):
    pass


class TagMismatch(GazeWalkError):
    pass


class LengthMismatch(GazeWalkError):
    pass


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle ``[a, b] x [c, d]``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        vals = (self.a, self.b, self.c, self.d)
        if not all(math.isfinite(v) for v in vals):
            raise GazeWalkError("window bounds must be finite")
        if not (self.a < self.b and self.c < self.d):
            raise GazeWalkError(f"degenerate window {vals}")

    @classmethod
    def unit(cls) -> "Window":
        return cls(0.0, 1.0, 0.0, 1.0)

    @property
    def width(self) -> float:
        return self.b - self.a

    @property
    def height(self) -> float:
        return self.d - self.c

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.a + self.b), 0.5 * (self.c + self.d))

    def contains(self, pts) -> np.ndarray:
        """Closed-window membership, vectorised over an ``(m, 2)`` array."""
        pts = np.asarray(pts, dtype=float)
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.a) & (x <= self.b) & (y >= self.c) & (y <= self.d)

    def as_list(self) -> list[float]:
        return [self.a, self.b, self.c, self.d]


def as_points(points) -> np.ndarray:
    """Coerce a point or a list of points to a float ``(m, 2)`` array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2) if arr.size == 2 else arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GazeWalkError(f"expected (m, 2) coordinates, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class FixationSequence:
    """Time-ordered fixations inside a window.

    ``points`` is stored as a read-only ``(n, 2)`` float array. Timestamps are
    carried along for I/O but no model uses them.
    """

    points: np.ndarray
    window: Window
    subject: str | None = None
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.size == 0:
            pts = pts.reshape(0, 2)
        pts = as_points(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.timestamps is not None:
            ts = np.array(self.timestamps, dtype=float, copy=True)
            if ts.shape != (len(pts),):
                raise GazeWalkError("timestamps must have one entry per point")
            ts.setflags(write=False)
            object.__setattr__(self, "timestamps", ts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, FixationSequence):
            return NotImplemented
        same_ts = (self.timestamps is None and other.timestamps is None) or (
            self.timestamps is not None
            and other.timestamps is not None
            and np.array_equal(self.timestamps, other.timestamps)
        )
        return (
            self.window == other.window
            and self.subject == other.subject
            and np.array_equal(self.points, other.points)
            and same_ts
        )

    __hash__ = None

    def head(self, n: int) -> "FixationSequence":
        ts = None if self.timestamps is None else self.timestamps[:n]
        return FixationSequence(self.points[:n], self.window, self.subject, ts)

    def reversed(self) -> "FixationSequence":
        ts = None if self.timestamps is None else self.timestamps[::-1]
        return FixationSequence(self.points[::-1], self.window, self.subject, ts)


def validate_sequence(seq: FixationSequence) -> FixationSequence:
    """Raise on the first violated invariant, otherwise return ``seq``."""
    pts = seq.points
    if len(pts) == 0:
        raise EmptySequence("sequence has no points")
    finite = np.isfinite(pts).all(axis=1)
    if not finite.all():
        raise NonFiniteCoordinate(int(np.argmin(finite)))
    inside = seq.window.contains(pts)
    if not inside.all():
        i = int(np.argmin(inside))
        raise PointOutsideWindow(i, tuple(pts[i]))
    return seq


class Family(str, enum.Enum):
    BINOMIAL = "binomial"
    RANDOM_WALK = "random_walk"
    REJECTION_HULL = "rejection_hull"
    REJECTION_BALL = "rejection_ball"
    REJECTION_RECURRENCE = "rejection_recurrence"
    HISTORY_ADAPTED = "history_adapted"


@dataclass(frozen=True)
class ModelSpec:
    """A model family with its parameters.

    ``sigma2`` is the kernel variance for the random-walk and rejection
    families. ``flat=True`` swaps the Gaussian kernel for the uniform kernel
    on the window. For the history-adapted family ``tau`` is the initial
    kernel variance and ``coverage`` selects hull or ball-union coverage.
    """

    family: Family
    sigma2: float | None = None
    rho: float | None = None
    theta: float | None = None
    r: float | None = None
    tau: float | None = None
    kappa: float | None = None
    coverage: str = "hull"
    flat: bool = False

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        fam = self.family
        if fam in (Family.RANDOM_WALK, Family.REJECTION_HULL, Family.REJECTION_BALL,
                   Family.REJECTION_RECURRENCE) and not self.flat:
            if self.sigma2 is None or not self.sigma2 > 0:
                raise ParamOutOfRange(f"{fam.value} needs sigma2 > 0 (or flat=True)")
        if fam in (Family.REJECTION_HULL, Family.REJECTION_BALL):
            if self.rho is None or not 0.0 <= self.rho <= 1.0:
                raise ParamOutOfRange("rho must lie in [0, 1]")
        if fam in (Family.REJECTION_BALL, Family.REJECTION_RECURRENCE) or (
            fam is Family.HISTORY_ADAPTED and self.coverage == "ball"
        ):
            if self.r is None or not self.r > 0:
                raise ParamOutOfRange(f"{fam.value} needs a radius r > 0")
        if fam is Family.REJECTION_RECURRENCE:
            if self.theta is None or not 0.0 <= self.theta <= 1.0:
                raise ParamOutOfRange("theta must lie in [0, 1]")
        if fam is Family.HISTORY_ADAPTED:
            if self.tau is None or not self.tau > 0:
                raise ParamOutOfRange("tau must be > 0")
            if self.kappa is None or not self.kappa >= 0:
                raise ParamOutOfRange("kappa must be >= 0")
            if self.coverage not in ("hull", "ball"):
                raise ParamOutOfRange(f"unknown coverage type {self.coverage!r}")

    @classmethod
    def binomial(cls):
        return cls(Family.BINOMIAL)

    @classmethod
    def random_walk(cls, sigma2=None, flat=False):
        return cls(Family.RANDOM_WALK, sigma2=sigma2, flat=flat)

    @classmethod
    def rejection_hull(cls, sigma2, rho, flat=False):
        return cls(Family.REJECTION_HULL, sigma2=sigma2, rho=rho, flat=flat)

    @classmethod
    def rejection_ball(cls, sigma2, rho, r, flat=False):
        return cls(Family.REJECTION_BALL, sigma2=sigma2, rho=rho, r=r, flat=flat)

    @classmethod
    def rejection_recurrence(cls, sigma2, theta, r, flat=False):
        return cls(Family.REJECTION_RECURRENCE, sigma2=sigma2, theta=theta, r=r, flat=flat)

    @classmethod
    def history_adapted(cls, tau, kappa, coverage="hull", r=None):
        return cls(Family.HISTORY_ADAPTED, tau=tau, kappa=kappa, coverage=coverage, r=r)

    def to_dict(self) -> dict:
        out = {"family": self.family.value}
        for name in ("sigma2", "rho", "theta", "r", "tau", "kappa"):
            val = getattr(self, name)
            if val is not None:
                out[name] = val
        if self.family is Family.HISTORY_ADAPTED:
            out["coverage"] = self.coverage
        if self.flat:
            out["flat"] = True
        return out


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream: int = 0

    def __post_init__(self):
        if self.stream < 0:
            raise GazeWalkError("stream index must be non-negative")


def derive_rng(spec: RngSpec) -> np.random.Generator:
    """PCG64 generator keyed by ``(seed, stream)`` through SeedSequence spawn keys.

    Streams are independent children of the master seed, so batch results do
    not depend on scheduling order.
    """
    ss = np.random.SeedSequence(entropy=int(spec.seed) & (2**64 - 1), spawn_key=(int(spec.stream),))
    return np.random.Generator(np.random.PCG64(ss))


def _fmt(v: float) -> str:
    return repr(float(v))


def write_sequences_csv(path, sequences: Iterable[FixationSequence]) -> None:
    """Write sequences as ``subject,order,x,y[,t_ms]`` rows."""
    sequences = list(sequences)
    with_t = any(s.timestamps is not None for s in sequences)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "order", "x", "y"] + (["t_ms"] if with_t else []))
        for j, s in enumerate(sequences):
            subj = s.subject if s.subject is not None else str(j + 1)
            for i, (x, y) in enumerate(s.points):
                row = [subj, i + 1, _fmt(x), _fmt(y)]
                if with_t:
                    row.append("" if s.timestamps is None else _fmt(s.timestamps[i]))
                w.writerow(row)


def read_sequences_csv(path, window: Window, validate: bool = True) -> dict[str, FixationSequence]:
    """Read a fixation CSV into ``{subject: FixationSequence}``, preserving file order of subjects."""
    rows: Mapping[str, list] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        missing = {"subject", "order", "x", "y"} - set(fields)
        if missing:
            raise GazeWalkError(f"{path}: missing CSV columns {sorted(missing)}")
        has_t = "t_ms" in fields
        for line, rec in enumerate(reader, start=2):
            try:
                order = int(rec["order"])
                x, y = float(rec["x"]), float(rec["y"])
                t = float(rec["t_ms"]) if has_t and rec.get("t_ms") not in (None, "") else None
            except (TypeError, ValueError) as exc:
                raise GazeWalkError(f"{path}:{line}: {exc}") from None
            rows[rec["subject"]].append((order, x, y, t))
    out = {}
    for subj, recs in rows.items():
        orders = [r[0] for r in recs]
        if any(b <= a for a, b in zip(orders, orders[1:])) or orders[0] < 1:
            raise GazeWalkError(f"{path}: order for subject {subj!r} must be 1-based and strictly increasing")
        pts = np.array([(r[1], r[2]) for r in recs], dtype=float)
        ts = [r[3] for r in recs]
        ts = None if all(t is None for t in ts) else np.array([np.nan if t is None else t for t in ts])
        seq = FixationSequence(pts, window, subj, ts)
        out[subj] = validate_sequence(seq) if validate else seq
    return out


def pooled_points(seqs: Sequence[FixationSequence]) -> np.ndarray:
    if not seqs:
        return np.zeros((0, 2))
    return np.concatenate([s.points for s in seqs], axis=0)

