"""Predictive-multiplicity metrics and reconciled-set construction.

Metrics over a model class (all under the uniform row distribution):

* per-row prediction variance, summarized across rows,
* ambiguity: mean over rows of the max-min prediction spread,
* discrepancy: max over model pairs of the mean absolute difference,
* pairwise epsilon-disagreement masses, summarized across pairs.

``build_reconciled_set`` derives a new class from an input class by
reconciling its members four ways: (a) every unordered pair, keeping both
outputs; (b) every pair, keeping the first output; (c) as (a) followed by
a seeded subsample back to the original size; (d) a seeded sequential
chain, collecting the survivor of each stage plus the final stage's
second output.

``paired_t_test`` is the two-sided dependent-samples test used to compare
aggregation methods across repeated experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import special

from .aggregation import AggregationConfig, ModelSet, sequential_reconcile
from .core import Dataset, disagreement_region
from .engine import ReconcileParams, reconcile
from .errors import AlignmentError, DegenerateInputError, ParameterError

__all__ = [
    "SummaryStats",
    "MultiplicityReport",
    "TTestResult",
    "ambiguity",
    "discrepancy",
    "prediction_variance_stats",
    "pairwise_disagreement_stats",
    "multiplicity_report",
    "build_reconciled_set",
    "paired_t_test",
]


@dataclass(frozen=True)
class SummaryStats:
    min: float
    max: float
    mean: float
    std: float

    @classmethod
    def of(cls, values: np.ndarray) -> "SummaryStats":
        v = np.asarray(values, dtype=float)
        return cls(
            min=float(v.min()),
            max=float(v.max()),
            mean=float(v.mean()),
            std=float(v.std()),
        )


@dataclass(frozen=True)
class MultiplicityReport:
    ambiguity: float
    discrepancy: float | None  # None for a single-model set
    variance_stats: SummaryStats
    disagreement_stats: SummaryStats | None
    epsilon_used: float


def ambiguity(ms: ModelSet) -> float:
    """Mean over rows of (max prediction - min prediction); 0 iff all agree."""
    mat = ms.matrix()
    return float(np.mean(mat.max(axis=0) - mat.min(axis=0)))


def discrepancy(ms: ModelSet) -> float:
    """Max over unordered model pairs of the mean absolute difference."""
    if len(ms) < 2:
        raise ParameterError("discrepancy needs at least two models")
    mat = ms.matrix()
    return max(
        float(np.mean(np.abs(mat[i] - mat[j])))
        for i, j in combinations(range(len(ms)), 2)
    )


def prediction_variance_stats(ms: ModelSet) -> SummaryStats:
    """Population variance of predictions per row, summarized across rows."""
    return SummaryStats.of(np.var(ms.matrix(), axis=0))


def pairwise_disagreement_stats(ms: ModelSet, eps: float) -> SummaryStats:
    """Epsilon-disagreement mass for every 2-combination, summarized."""
    if len(ms) < 2:
        raise ParameterError("pairwise disagreement needs at least two models")
    masses = [
        disagreement_region(ms.models[i], ms.models[j], eps).u.count / ms.n
        for i, j in combinations(range(len(ms)), 2)
    ]
    return SummaryStats.of(np.asarray(masses))


def multiplicity_report(ms: ModelSet, eps: float = 0.2) -> MultiplicityReport:
    single = len(ms) < 2
    return MultiplicityReport(
        ambiguity=ambiguity(ms),
        discrepancy=None if single else discrepancy(ms),
        variance_stats=prediction_variance_stats(ms),
        disagreement_stats=None if single else pairwise_disagreement_stats(ms, eps),
        epsilon_used=float(eps),
    )


def build_reconciled_set(
    ms: ModelSet,
    d: Dataset,
    params: ReconcileParams,
    method: str,
    seed: int = 0,
) -> ModelSet:
    """Derive a reconciled class from ms; see the module docstring for a-d."""
    if len(ms) < 2:
        raise ParameterError("reconciled-set construction needs at least two models")
    if method not in ("a", "b", "c", "d"):
        raise ParameterError(f"method must be one of a, b, c, d; got {method!r}")

    if method in ("a", "b", "c"):
        models = []
        labels = []
        for i, j in combinations(range(len(ms)), 2):
            res = reconcile(ms.models[i], ms.models[j], d, params)
            pair = f"{ms.labels[i]}~{ms.labels[j]}"
            models.append(res.f1_final)
            labels.append(f"{pair}/1")
            if method in ("a", "c"):
                models.append(res.f2_final)
                labels.append(f"{pair}/2")
        if method == "c":
            rng = np.random.default_rng(seed)
            keep = sorted(rng.choice(len(models), size=len(ms), replace=False).tolist())
            models = [models[k] for k in keep]
            labels = [labels[k] for k in keep]
        return ModelSet(models=tuple(models), labels=tuple(labels))

    # method d: seeded chain; stage survivors plus the last stage's other output
    seq = sequential_reconcile(
        ms,
        d,
        params,
        AggregationConfig(seed=seed, pick_policy="random", order_policy="shuffled"),
    )
    models = [stage.survivor for stage in seq.stages]
    labels = [f"chain_{stage.index}" for stage in seq.stages]
    models.append(seq.stages[-1].non_survivor)
    labels.append(f"chain_{seq.stages[-1].index}_other")
    return ModelSet(models=tuple(models), labels=tuple(labels))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float


def paired_t_test(xs, ys) -> TTestResult:
    """Two-sided paired t-test on differences xs - ys.

    t = mean(d) / (sd(d)/sqrt(n)) with the sample standard deviation;
    p = I_{df/(df+t^2)}(df/2, 1/2) via the regularized incomplete beta.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise AlignmentError("paired t-test needs two equal-length vectors")
    n = xs.size
    if n < 2:
        raise ParameterError("paired t-test needs at least two pairs")
    diff = xs - ys
    sd = float(diff.std(ddof=1))
    if sd == 0.0:
        raise DegenerateInputError("paired differences have zero variance")
    t = float(diff.mean() / (sd / math.sqrt(n)))
    df = n - 1
    p = float(special.betainc(df / 2.0, 0.5, df / (df + t * t)))
    return TTestResult(t=t, df=df, p=p)
