"""The reconciliation engine: iterative group-conditional mean patching.

Given two predictors whose epsilon-disagreement region carries at least
alpha probability mass, each round

1. scores the four candidates (model i in {1,2}) x (region side in {>,<})
   by mu(side) * (E[y|side] - E[f_i|side])^2 and picks the argmax,
2. measures the raw gap gap = E[y|g] - E[f_i|g] on the winning side g,
3. rounds the gap to the 1/m grid and adds it to f_i on g, projecting back
   to the predictor's declared range,

until the disagreement mass drops below alpha. Every round strictly
improves the patched model's Brier score by at least alpha*eps^2/16, which
caps the total number of rounds at (B(f1)+B(f2)) * 16/(alpha*eps^2); a
defensive hard cap (default: that bound plus one) turns any floating-point
stall into an explicit ``round_cap`` outcome instead of a hang.

The loop is strictly sequential; independent runs are safe to execute in
parallel since inputs are immutable and results are plain values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .core import (
    Dataset,
    DisagreementRegion,
    GroupIndicator,
    Predictor,
    brier_score,
    disagreement_region,
    group_mass,
    mean_consistency_gap,
    patch,
    round_to_grid,
)
from .errors import AlignmentError, EmptyGroupError, ParameterError

__all__ = [
    "ReconcileParams",
    "RoundRecord",
    "ReconcileResult",
    "default_grid_resolution",
    "theoretical_round_bound",
    "select_update",
    "reconcile",
    "apply_trace_predicates",
]

CANDIDATE_ORDER = ((1, ">"), (1, "<"), (2, ">"), (2, "<"))


def default_grid_resolution(alpha: float, epsilon: float) -> int:
    """m = ceil(2 / (sqrt(alpha) * epsilon))."""
    return math.ceil(2.0 / (math.sqrt(alpha) * epsilon))


def theoretical_round_bound(
    f1: Predictor, f2: Predictor, d: Dataset, alpha: float, epsilon: float
) -> float:
    """Upper bound on total rounds: (B(f1) + B(f2)) * 16 / (alpha * eps^2)."""
    return (brier_score(f1, d) + brier_score(f2, d)) * 16.0 / (alpha * epsilon**2)


@dataclass(frozen=True)
class ReconcileParams:
    """Run parameters. ``m`` and ``max_rounds`` default to their formulas."""

    alpha: float
    epsilon: float
    m: int | None = None
    max_rounds: int | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ParameterError(f"alpha must be in (0, 1], got {self.alpha}")
        if not (0.0 < self.epsilon <= 1.0):
            raise ParameterError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.m is not None and self.m < 1:
            raise ParameterError(f"m must be >= 1, got {self.m}")
        if self.max_rounds is not None and self.max_rounds < 0:
            raise ParameterError(f"max_rounds must be >= 0, got {self.max_rounds}")

    def resolved(self, f1: Predictor, f2: Predictor, d: Dataset) -> "ReconcileParams":
        """Fill defaulted fields for a concrete model pair."""
        m = self.m if self.m is not None else default_grid_resolution(self.alpha, self.epsilon)
        cap = self.max_rounds
        if cap is None:
            cap = math.ceil(theoretical_round_bound(f1, f2, d, self.alpha, self.epsilon)) + 1
        return replace(self, m=m, max_rounds=cap)

    @property
    def min_round_improvement(self) -> float:
        """alpha * eps^2 / 16, the guaranteed per-round Brier decrease."""
        return self.alpha * self.epsilon**2 / 16.0


@dataclass(frozen=True)
class RoundRecord:
    """One patching round: who was patched, where, and by how much."""

    t: int
    patched_model: int
    direction: str
    group: GroupIndicator
    group_mass: float
    delta_raw: float
    delta: float
    brier_before: float
    brier_after: float
    disagreement_mass_before: float


@dataclass(frozen=True)
class ReconcileResult:
    f1_final: Predictor
    f2_final: Predictor
    t1: int
    t2: int
    trace: tuple[RoundRecord, ...]
    terminated_by: str  # 'converged' | 'round_cap'
    params: ReconcileParams  # resolved

    @property
    def rounds(self) -> int:
        return self.t1 + self.t2

    @property
    def converged(self) -> bool:
        return self.terminated_by == "converged"

    def final_disagreement_mass(self, d: Dataset) -> float:
        region = disagreement_region(self.f1_final, self.f2_final, self.params.epsilon)
        return group_mass(region.u, d)


def _candidate_scores(
    region: DisagreementRegion, f1: Predictor, f2: Predictor, d: Dataset
) -> dict[tuple[int, str], float]:
    scores = {}
    for i, direction in CANDIDATE_ORDER:
        side = region.side(direction)
        if side.is_empty:
            scores[(i, direction)] = 0.0
            continue
        f = f1 if i == 1 else f2
        gap = mean_consistency_gap(f, d, side)
        scores[(i, direction)] = group_mass(side, d) * gap * gap
    return scores


def select_update(
    f1: Predictor, f2: Predictor, d: Dataset, eps: float
) -> tuple[int, str, GroupIndicator, float]:
    """Argmax over the four (model, side) candidates; empty sides score 0.

    Ties break deterministically: lower model index first, then '>' over '<'.
    """
    region = disagreement_region(f1, f2, eps)
    if region.u.is_empty:
        raise EmptyGroupError("select_update called with an empty disagreement region")
    scores = _candidate_scores(region, f1, f2, d)
    best = max(CANDIDATE_ORDER, key=lambda c: scores[c])  # max keeps the first maximum
    return best[0], best[1], region.side(best[1]), scores[best]


def reconcile(
    f1: Predictor, f2: Predictor, d: Dataset, params: ReconcileParams
) -> ReconcileResult:
    """Run the full loop; see the module docstring for the per-round step."""
    if f1.n != d.n or f2.n != d.n:
        raise AlignmentError(
            f"predictors of length {f1.n}/{f2.n} do not match dataset n={d.n}"
        )
    params = params.resolved(f1, f2, d)

    cur1, cur2 = f1, f2
    t1 = t2 = 0
    trace: list[RoundRecord] = []
    terminated_by = "round_cap"
    while True:
        region = disagreement_region(cur1, cur2, params.epsilon)
        mass = group_mass(region.u, d)
        if mass < params.alpha:
            terminated_by = "converged"
            break
        if len(trace) >= params.max_rounds:
            break

        scores = _candidate_scores(region, cur1, cur2, d)
        i, direction = max(CANDIDATE_ORDER, key=lambda c: scores[c])
        g = region.side(direction)
        target = cur1 if i == 1 else cur2

        delta_raw = mean_consistency_gap(target, d, g)
        delta = round_to_grid(delta_raw, params.m)
        brier_before = brier_score(target, d)
        patched = patch(target, g, delta)
        brier_after = brier_score(patched, d)

        trace.append(
            RoundRecord(
                t=len(trace),
                patched_model=i,
                direction=direction,
                group=g,
                group_mass=group_mass(g, d),
                delta_raw=delta_raw,
                delta=delta,
                brier_before=brier_before,
                brier_after=brier_after,
                disagreement_mass_before=mass,
            )
        )
        if i == 1:
            cur1 = patched
            t1 += 1
        else:
            cur2 = patched
            t2 += 1

    return ReconcileResult(
        f1_final=cur1,
        f2_final=cur2,
        t1=t1,
        t2=t2,
        trace=tuple(trace),
        terminated_by=terminated_by,
        params=params,
    )


def apply_trace_predicates(
    f1: Predictor, f2: Predictor, trace: tuple[RoundRecord, ...], epsilon: float
) -> tuple[Predictor, Predictor]:
    """Replay a recorded patch sequence onto another aligned predictor pair.

    Groups are not transferred as row masks; each round re-evaluates the
    recorded disagreement predicate (side, epsilon) on the current pair and
    applies the recorded delta wherever it holds. This is how updates
    learned on one split are carried onto held-out rows: patches are
    functions of the models' own outputs, not of row identities.
    """
    cur1, cur2 = f1, f2
    for rec in trace:
        region = disagreement_region(cur1, cur2, epsilon)
        mask = region.side(rec.direction)
        if rec.patched_model == 1:
            cur1 = patch(cur1, mask, rec.delta)
        else:
            cur2 = patch(cur2, mask, rec.delta)
    return cur1, cur2
