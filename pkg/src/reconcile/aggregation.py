"""Model-class aggregation: pick or build one predictor from a set.

Four ways to collapse a class of competing models into a single prediction
rule: majority vote (or row means for regression), per-row random model
choice, a single random model used everywhere, and a sequential chain of
pairwise reconciliations that carries a survivor through the whole class.
The first three never touch the reconciliation engine; the chain inherits
its guarantees, in particular a survivor picked by lower Brier score never
scores worse than the best model it has absorbed plus 4*eps + 3*alpha.

``robustness_sweep`` reproduces the replace-with-random-predictors
experiment: it degrades the class one model at a time and tabulates how
plain aggregation and the sequential chain respond.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, GroupIndicator, Predictor, brier_score
from .engine import ReconcileParams, ReconcileResult, reconcile
from .errors import AlignmentError, ParameterError

__all__ = [
    "ModelSet",
    "AggregationConfig",
    "SequentialStage",
    "SequentialResult",
    "SweepCell",
    "mode_aggregate",
    "mean_aggregate",
    "randomized_prediction",
    "random_model_select",
    "sequential_reconcile",
    "robustness_sweep",
]


@dataclass(frozen=True)
class ModelSet:
    """An ordered collection of aligned predictors with provenance labels."""

    models: tuple[Predictor, ...]
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ParameterError("a model set needs at least one model")
        n = models[0].n
        for k, m in enumerate(models):
            if m.n != n:
                raise AlignmentError(f"model {k} has length {m.n}, expected {n}")
        labels = tuple(self.labels) if self.labels else tuple(
            f"model_{k}" for k in range(len(models))
        )
        if len(labels) != len(models):
            raise AlignmentError("one label per model required")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.models)

    @property
    def n(self) -> int:
        return self.models[0].n

    def matrix(self) -> np.ndarray:
        """Stacked predictions, shape (n_models, n_rows)."""
        return np.stack([m.values for m in self.models])

    def common_range(self) -> tuple[float, float]:
        ranges = {m.range for m in self.models}
        if len(ranges) != 1:
            raise ParameterError(f"models declare conflicting ranges: {sorted(ranges)}")
        return next(iter(ranges))


@dataclass(frozen=True)
class AggregationConfig:
    method: str = "sequential_reconcile"
    threshold: float = 0.5
    seed: int = 0
    pick_policy: str = "lower_brier"  # or 'random'
    order_policy: str = "given"  # or 'shuffled'

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ParameterError(f"threshold must be in (0,1), got {self.threshold}")
        if self.pick_policy not in ("lower_brier", "random"):
            raise ParameterError(f"unknown pick_policy {self.pick_policy!r}")
        if self.order_policy not in ("given", "shuffled"):
            raise ParameterError(f"unknown order_policy {self.order_policy!r}")


def mode_aggregate(ms: ModelSet, threshold: float = 0.5) -> Predictor:
    """Per-row majority vote; a model votes 1 iff its prediction >= threshold.

    Even splits vote 1.0 (documented tie rule).
    """
    if not (0.0 < threshold < 1.0):
        raise ParameterError(f"threshold must be in (0,1), got {threshold}")
    votes = (ms.matrix() >= threshold).sum(axis=0)
    out = (2 * votes >= len(ms)).astype(float)
    return Predictor(values=out, range=(0.0, 1.0))


def mean_aggregate(ms: ModelSet) -> Predictor:
    """Per-row arithmetic mean, clamped to the models' common range."""
    lo, hi = ms.common_range()
    return Predictor(values=np.clip(ms.matrix().mean(axis=0), lo, hi), range=(lo, hi))


def randomized_prediction(ms: ModelSet, seed: int) -> Predictor:
    """Per row, copy the value of a uniformly sampled model (seeded)."""
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(ms), size=ms.n)
    return Predictor(
        values=ms.matrix()[picks, np.arange(ms.n)], range=ms.common_range()
    )


def random_model_select(ms: ModelSet, seed: int) -> Predictor:
    """Sample one model uniformly and return it whole."""
    rng = np.random.default_rng(seed)
    return ms.models[int(rng.integers(0, len(ms)))]


@dataclass(frozen=True)
class SequentialStage:
    index: int
    left_label: str
    right_label: str
    survivor_output: int  # 1 = left output survived, 2 = right output
    result: ReconcileResult

    @property
    def survivor(self) -> Predictor:
        return self.result.f1_final if self.survivor_output == 1 else self.result.f2_final

    @property
    def non_survivor(self) -> Predictor:
        return self.result.f2_final if self.survivor_output == 1 else self.result.f1_final


@dataclass(frozen=True)
class SequentialResult:
    survivor: Predictor
    survivor_label: str
    stages: tuple[SequentialStage, ...]
    terminated_by: str  # 'converged' unless any stage hit its round cap

    @property
    def total_rounds(self) -> int:
        return sum(s.result.rounds for s in self.stages)


def sequential_reconcile(
    ms: ModelSet, d: Dataset, params: ReconcileParams, cfg: AggregationConfig
) -> SequentialResult:
    """Carry one survivor through |ms| - 1 pairwise reconciliations.

    After each stage the survivor is the lower-Brier output (default) or a
    seeded coin flip, then meets the next model in the configured order.
    """
    if len(ms) < 2:
        raise ParameterError("sequential reconcile needs at least two models")
    rng = np.random.default_rng(cfg.seed)
    order = list(range(len(ms)))
    if cfg.order_policy == "shuffled":
        order = [int(i) for i in rng.permutation(len(ms))]

    survivor = ms.models[order[0]]
    survivor_label = ms.labels[order[0]]
    stages: list[SequentialStage] = []
    capped = False
    for stage_idx, j in enumerate(order[1:]):
        entrant = ms.models[j]
        res = reconcile(survivor, entrant, d, params)
        capped = capped or not res.converged
        if cfg.pick_policy == "lower_brier":
            pick = 1 if brier_score(res.f1_final, d) <= brier_score(res.f2_final, d) else 2
        else:
            pick = 1 + int(rng.integers(0, 2))
        stage = SequentialStage(
            index=stage_idx,
            left_label=survivor_label,
            right_label=ms.labels[j],
            survivor_output=pick,
            result=res,
        )
        stages.append(stage)
        survivor = stage.survivor
        if pick == 2:
            survivor_label = ms.labels[j]
    return SequentialResult(
        survivor=survivor,
        survivor_label=survivor_label,
        stages=tuple(stages),
        terminated_by="round_cap" if capped else "converged",
    )


@dataclass(frozen=True)
class SweepCell:
    k: int
    method: str
    mse: float
    seed: int


def robustness_sweep(
    ms: ModelSet,
    d: Dataset,
    params: ReconcileParams,
    k_range,
    seed: int,
    baseline: str = "mode",
    cfg: AggregationConfig | None = None,
) -> tuple[SweepCell, ...]:
    """Replace k models with uniform-random predictors, k over k_range.

    For each k the cell table records the final-model MSE of the baseline
    aggregator (mode or mean) and of the sequential chain, each on the
    degraded set. Which models get replaced is a seeded draw per k.
    """
    if baseline not in ("mode", "mean"):
        raise ParameterError(f"baseline must be 'mode' or 'mean', got {baseline!r}")
    ks = [int(k) for k in k_range]
    if any(k < 0 or k > len(ms) for k in ks):
        raise ParameterError(f"k_range must lie within [0, {len(ms)}]")
    cfg = cfg or AggregationConfig(seed=seed)
    lo, hi = ms.common_range()

    cells: list[SweepCell] = []
    for k in ks:
        rng = np.random.default_rng([seed, k])
        replaced = set(rng.choice(len(ms), size=k, replace=False).tolist()) if k else set()
        degraded = []
        labels = []
        for idx, m in enumerate(ms.models):
            if idx in replaced:
                degraded.append(
                    Predictor(values=rng.uniform(lo, hi, size=ms.n), range=(lo, hi))
                )
                labels.append(f"random_{idx}")
            else:
                degraded.append(m)
                labels.append(ms.labels[idx])
        dset = ModelSet(models=tuple(degraded), labels=tuple(labels))

        base = mode_aggregate(dset, cfg.threshold) if baseline == "mode" else mean_aggregate(dset)
        cells.append(SweepCell(k=k, method=baseline, mse=brier_score(base, d), seed=seed))
        seq = sequential_reconcile(dset, d, params, cfg)
        cells.append(
            SweepCell(k=k, method="sequential_reconcile", mse=brier_score(seq.survivor, d), seed=seed)
        )
    return tuple(cells)
