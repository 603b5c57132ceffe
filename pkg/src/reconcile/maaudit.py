"""Multiaccuracy auditing of a reconciliation trace.

A predictor is beta-multiaccurate w.r.t. a group collection if
(E[f - y | g])^2 <= beta / mu(g) for every group. A full reconciliation
run defines such a collection: the witnessing side of the disagreement
region at each round. ``audit_trace`` checks the final models against
those historical groups with beta = alpha * eps^2 and reports violations
rather than failing, since later patches can disturb the consistency a
group enjoyed right after its own round.

What does hold exactly, round by round, is the rounding-residual identity:
right after the additive patch (before range projection) the patched
model's group-mean gap equals delta_raw - delta, whose square is at most
1/(4 m^2). ``patch_residuals`` replays a trace from the initial models to
verify this; it also reports where the projection clipped values, since
clipping moves the post-round gap off the identity (usually toward zero,
as in any run that saturates at a label boundary).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BOUND_TOL, Dataset, GroupIndicator, Predictor, group_mass, mean_consistency_gap, patch
from .engine import ReconcileResult, RoundRecord
from .errors import EmptyGroupError

__all__ = [
    "GroupAudit",
    "MaAuditReport",
    "PatchResidual",
    "ma_gap",
    "audit_trace",
    "patch_residuals",
]


def ma_gap(f: Predictor, d: Dataset, g: GroupIndicator) -> float:
    """(E[f - y | g = 1])^2, the squared group-mean prediction error."""
    return mean_consistency_gap(f, d, g) ** 2


@dataclass(frozen=True)
class GroupAudit:
    t: int
    direction: str
    audited_model: int
    mass: float
    sq_gap: float
    bound: float
    violated: bool


@dataclass(frozen=True)
class MaAuditReport:
    beta: float
    per_group: tuple[GroupAudit, ...]
    max_excess: float

    @property
    def violations(self) -> int:
        return sum(1 for a in self.per_group if a.violated)


def audit_trace(res: ReconcileResult, d: Dataset, beta: float) -> MaAuditReport:
    """Evaluate each round's final patched model on that round's group.

    For round t the audited model is the one patched at t, in its final
    state; the bound is beta / mu(g_t). Violations are recorded, and
    max_excess is the largest gap-minus-bound over all rounds (0 if none).
    """
    entries = []
    max_excess = 0.0
    for rec in res.trace:
        f = res.f1_final if rec.patched_model == 1 else res.f2_final
        mass = group_mass(rec.group, d)
        sq = ma_gap(f, d, rec.group)
        bound = beta / mass
        entries.append(
            GroupAudit(
                t=rec.t,
                direction=rec.direction,
                audited_model=rec.patched_model,
                mass=mass,
                sq_gap=sq,
                bound=bound,
                violated=sq > bound + BOUND_TOL,
            )
        )
        max_excess = max(max_excess, sq - bound)
    return MaAuditReport(
        beta=float(beta), per_group=tuple(entries), max_excess=max(0.0, max_excess)
    )


@dataclass(frozen=True)
class PatchResidual:
    t: int
    residual: float  # delta_raw - delta
    additive_gap: float  # group gap right after the unprojected patch
    clipped: bool  # whether the range projection changed any value


def patch_residuals(
    f1: Predictor, f2: Predictor, d: Dataset, res: ReconcileResult
) -> tuple[PatchResidual, ...]:
    """Replay a trace from the initial models, measuring per-round residuals.

    Replay applies the recorded deltas on the recorded groups (the engine
    is deterministic, so intermediate states are reproduced bit-for-bit)
    and, before each projection, measures the patched model's group-mean
    gap on the additive intermediate.
    """
    cur = {1: f1, 2: f2}
    out = []
    for rec in res.trace:
        target = cur[rec.patched_model]
        additive = target.values + np.where(rec.group.mask, rec.delta, 0.0)
        w = d.row_weights()[rec.group.mask]
        y_mean = float(np.dot(w, d.labels[rec.group.mask]) / w.sum())
        f_mean = float(np.dot(w, additive[rec.group.mask]) / w.sum())
        projected = patch(target, rec.group, rec.delta)
        out.append(
            PatchResidual(
                t=rec.t,
                residual=rec.delta_raw - rec.delta,
                additive_gap=y_mean - f_mean,
                clipped=not np.array_equal(
                    projected.values[rec.group.mask], additive[rec.group.mask]
                ),
            )
        )
        cur[rec.patched_model] = projected
    return tuple(out)
