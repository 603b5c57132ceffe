"""Foundational types and primitive operations.

Everything downstream composes five primitives over a finite sample:

* Brier score  B(f) = E[(f(x) - y)^2], expectation under the dataset's
  empirical distribution (uniform by default, optionally row-weighted),
* group mass   mu(g) = Pr[g(x) = 1],
* epsilon-disagreement regions between two predictors (strict inequality:
  a point disagrees iff |f1(x) - f2(x)| > eps; the boundary agrees),
* rounding to the nearest multiple of 1/m (signed grid, half-up ties),
* additive patching of a predictor on a group, projected back to its range.

All operations are pure functions over immutable inputs: arrays are copied
and frozen on construction, so values can be shared across threads and
compared bit-for-bit after a pipeline runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .errors import AlignmentError, EmptyGroupError, ParameterError

__all__ = [
    "Dataset",
    "Predictor",
    "GroupIndicator",
    "DisagreementRegion",
    "brier_score",
    "restricted_brier",
    "group_mass",
    "disagreement_region",
    "round_to_grid",
    "patch",
    "mean_consistency_gap",
]

#: Absolute tolerance for comparisons against theorem bounds.
BOUND_TOL = 1e-9


def _frozen_array(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """Indexed samples with labels and optional groups/treatment/weights.

    The empirical distribution is uniform over rows unless ``weights`` is
    given (the CATE reduction passes per-cell weights). Weights must be
    positive; they are normalized to sum to 1.
    """

    labels: np.ndarray
    ids: tuple = ()
    groups: Mapping[str, np.ndarray] = field(default_factory=dict)
    treatment: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        labels = _frozen_array(self.labels, float)
        if labels.ndim != 1 or labels.size < 1:
            raise ParameterError("labels must be a non-empty 1-d vector")
        if not np.all(np.isfinite(labels)):
            raise ParameterError("labels contain non-finite values")
        object.__setattr__(self, "labels", labels)
        n = labels.size

        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(n))
        if len(ids) != n:
            raise AlignmentError(f"ids length {len(ids)} != n {n}")
        if len(set(ids)) != n:
            raise ParameterError("ids must be unique")
        object.__setattr__(self, "ids", ids)

        groups = {}
        for name, mask in dict(self.groups).items():
            m = _frozen_array(mask, bool)
            if m.shape != (n,):
                raise AlignmentError(f"group {name!r} length {m.size} != n {n}")
            groups[name] = m
        object.__setattr__(self, "groups", groups)

        if self.treatment is not None:
            t = _frozen_array(self.treatment, bool)
            if t.shape != (n,):
                raise AlignmentError(f"treatment length {t.size} != n {n}")
            object.__setattr__(self, "treatment", t)

        if self.weights is not None:
            w = np.array(self.weights, dtype=float, copy=True)
            if w.shape != (n,):
                raise AlignmentError(f"weights length {w.size} != n {n}")
            if not np.all(np.isfinite(w)) or np.any(w <= 0):
                raise ParameterError("weights must be finite and positive")
            w /= w.sum()
            w.setflags(write=False)
            object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def has_binary_labels(self) -> bool:
        return bool(np.all((self.labels == 0.0) | (self.labels == 1.0)))

    def require_binary(self) -> None:
        if not self.has_binary_labels:
            bad = int(np.flatnonzero((self.labels != 0.0) & (self.labels != 1.0))[0])
            raise ParameterError(
                f"binary mode requires labels in {{0,1}}; row {bad} "
                f"(id {self.ids[bad]!r}) has y={self.labels[bad]}"
            )

    def row_weights(self) -> np.ndarray:
        """Normalized empirical weights (uniform when none were given)."""
        if self.weights is not None:
            return self.weights
        return np.full(self.n, 1.0 / self.n)


@dataclass(frozen=True)
class Predictor:
    """A prediction vector aligned to a dataset, with a declared closed range."""

    values: np.ndarray
    range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        values = _frozen_array(self.values, float)
        if values.ndim != 1 or values.size < 1:
            raise ParameterError("values must be a non-empty 1-d vector")
        lo, hi = float(self.range[0]), float(self.range[1])
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ParameterError(f"invalid range [{lo}, {hi}]")
        if not np.all(np.isfinite(values)):
            raise ParameterError("predictions contain non-finite values")
        if values.min() < lo or values.max() > hi:
            raise ParameterError(
                f"predictions outside declared range [{lo}, {hi}]: "
                f"min={values.min()}, max={values.max()}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "range", (lo, hi))

    @property
    def n(self) -> int:
        return self.values.size

    def with_values(self, values) -> "Predictor":
        return Predictor(values=values, range=self.range)


@dataclass(frozen=True)
class GroupIndicator:
    """Boolean membership mask over the rows of a dataset."""

    mask: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mask", _frozen_array(self.mask, bool))

    @property
    def n(self) -> int:
        return self.mask.size

    @property
    def count(self) -> int:
        return int(self.mask.sum())

    @property
    def is_empty(self) -> bool:
        return not self.mask.any()

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)


@dataclass(frozen=True)
class DisagreementRegion:
    """The points where two predictors differ by more than epsilon.

    ``u`` is the disjoint union of ``u_gt`` (f1 above f2) and ``u_lt``
    (f1 below f2).
    """

    u: GroupIndicator
    u_gt: GroupIndicator
    u_lt: GroupIndicator
    epsilon: float

    def side(self, direction: str) -> GroupIndicator:
        if direction == ">":
            return self.u_gt
        if direction == "<":
            return self.u_lt
        raise ParameterError(f"direction must be '>' or '<', got {direction!r}")


def _check_aligned(n: int, *lengths: int) -> None:
    for m in lengths:
        if m != n:
            raise AlignmentError(f"length mismatch: expected {n}, got {m}")


def brier_score(f: Predictor, d: Dataset) -> float:
    """Mean squared error of predictions against labels, (1/n) sum (f_i - y_i)^2.

    Under row weights the mean is weight-averaged.
    """
    _check_aligned(d.n, f.n)
    sq = (f.values - d.labels) ** 2
    if d.weights is None:
        return float(sq.mean())
    return float(np.dot(d.weights, sq))


def restricted_brier(f: Predictor, d: Dataset, p: GroupIndicator) -> float:
    """Brier score over the rows with p = 1 only."""
    _check_aligned(d.n, f.n, p.n)
    if p.is_empty:
        raise EmptyGroupError("restricted_brier over an empty group")
    sq = (f.values - d.labels) ** 2
    if d.weights is None:
        return float(sq[p.mask].mean())
    w = d.weights[p.mask]
    return float(np.dot(w, sq[p.mask]) / w.sum())


def group_mass(g: GroupIndicator, d: Dataset) -> float:
    """Probability mass of the group under the dataset's empirical distribution."""
    _check_aligned(d.n, g.n)
    if d.weights is None:
        return g.count / d.n
    return float(d.weights[g.mask].sum())


def disagreement_region(f1: Predictor, f2: Predictor, eps: float) -> DisagreementRegion:
    """Split the rows where |f1 - f2| > eps by the sign of the difference."""
    if not (eps > 0.0):
        raise ParameterError(f"epsilon must be positive, got {eps}")
    _check_aligned(f1.n, f2.n)
    diff = f1.values - f2.values
    gt = diff > eps
    lt = diff < -eps
    return DisagreementRegion(
        u=GroupIndicator(gt | lt),
        u_gt=GroupIndicator(gt),
        u_lt=GroupIndicator(lt),
        epsilon=float(eps),
    )


def round_to_grid(v: float, m: int) -> float:
    """Nearest multiple of 1/m to v; exact midpoints round toward +inf.

    The grid extends over negative values (the mean-consistency gap can be
    negative), preserving |v - result| <= 1/(2m). The nearest point is
    selected in exact rational arithmetic: float-evaluated distances can
    misorder candidates that differ by less than the grid points' own
    representation error.
    """
    if m < 1:
        raise ParameterError(f"grid resolution m must be >= 1, got {m}")
    scaled = Fraction(v) * m
    k = math.floor(scaled)
    if scaled - k >= Fraction(1, 2):
        k += 1
    return k / m


def patch(f: Predictor, g: GroupIndicator, delta: float) -> Predictor:
    """Add delta on the group, clamped to the predictor's declared range."""
    _check_aligned(f.n, g.n)
    lo, hi = f.range
    shifted = np.clip(f.values + delta, lo, hi)
    return f.with_values(np.where(g.mask, shifted, f.values))


def mean_consistency_gap(f: Predictor, d: Dataset, g: GroupIndicator) -> float:
    """E[y | g=1] - E[f | g=1]: the unsquared group mean-consistency gap.

    f violates alpha-consistency w.r.t. g iff the square of this gap
    exceeds alpha / mu(g).
    """
    _check_aligned(d.n, f.n, g.n)
    if g.is_empty:
        raise EmptyGroupError("mean_consistency_gap over an empty group")
    if d.weights is None:
        return float(d.labels[g.mask].mean() - f.values[g.mask].mean())
    w = d.weights[g.mask]
    tot = w.sum()
    return float(np.dot(w, d.labels[g.mask]) / tot - np.dot(w, f.values[g.mask]) / tot)
