"""Subgroup-accuracy harness: does reconciliation repair a corrupted model?

The experiment: take two models, randomize one of them on a minority
subgroup, reconcile, and compare restricted Brier scores on the majority
and minority groups before and after. When the minority mass is at least
sqrt(4*eps + 3*alpha), the repaired model's minority score is guaranteed
within sqrt(4*eps + 3*alpha) of the clean model's initial minority score;
below that mass the check is reported as not applicable (the worst case
concentrates every residual disagreement inside the subgroup, which the
bound must then survive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, GroupIndicator, Predictor, group_mass, restricted_brier
from .engine import ReconcileParams, ReconcileResult, reconcile
from .errors import EmptyGroupError

__all__ = ["FairnessReport", "corrupt_on_group", "fairness_experiment"]


def corrupt_on_group(f: Predictor, p: GroupIndicator, seed: int) -> Predictor:
    """Replace the predictions on the group with i.i.d. uniforms over f's range."""
    if p.is_empty:
        raise EmptyGroupError("cannot corrupt an empty group")
    rng = np.random.default_rng(seed)
    lo, hi = f.range
    noise = rng.uniform(lo, hi, size=f.n)
    return f.with_values(np.where(p.mask, noise, f.values))


@dataclass(frozen=True)
class FairnessReport:
    """Restricted scores on a (model, phase, group) grid plus the bound check.

    ``restricted`` keys are (model index 1|2, 'before'|'after',
    'majority'|'minority'); 'before' means after corruption but before
    reconciliation, matching the experiment's framing.
    """

    restricted: dict
    minority_mass: float
    lemma_threshold: float  # sqrt(4*eps + 3*alpha), both the mass precondition and the slack
    lemma_applicable: bool
    lemma_bound: float  # clean model's initial minority score + threshold
    bound_satisfied: bool | None  # None when not applicable
    result: ReconcileResult


def fairness_experiment(
    f1: Predictor,
    f2: Predictor,
    d: Dataset,
    p_minority: GroupIndicator,
    params: ReconcileParams,
    seed: int,
    p_majority: GroupIndicator | None = None,
) -> FairnessReport:
    """Corrupt f2 on the minority group, reconcile, and fill the score grid.

    The majority group defaults to the minority's complement; pass one
    explicitly when the two named groups do not cover the dataset.
    """
    if p_majority is None:
        p_majority = GroupIndicator(~p_minority.mask)
    corrupted = corrupt_on_group(f2, p_minority, seed)
    res = reconcile(f1, corrupted, d, params)

    phases = {
        "before": (f1, corrupted),
        "after": (res.f1_final, res.f2_final),
    }
    groups = {"majority": p_majority, "minority": p_minority}
    restricted = {
        (idx, phase, gname): restricted_brier(model, d, gmask)
        for phase, pair in phases.items()
        for idx, model in zip((1, 2), pair)
        for gname, gmask in groups.items()
    }

    threshold = math.sqrt(4.0 * params.epsilon + 3.0 * params.alpha)
    mass = group_mass(p_minority, d)
    applicable = mass >= threshold
    clean_minority = restricted_brier(f1, d, p_minority)
    bound = clean_minority + threshold
    satisfied = (restricted[(2, "after", "minority")] <= bound) if applicable else None
    return FairnessReport(
        restricted=restricted,
        minority_mass=mass,
        lemma_threshold=threshold,
        lemma_applicable=applicable,
        lemma_bound=bound,
        bound_satisfied=satisfied,
        result=res,
    )
