"""Reconciling conditional average treatment effect estimators.

Estimators here are per-subgroup (cell) vectors: the covariate space is
already partitioned (the partition is input data, e.g. leaves of a tree),
and each unit carries a cell id, a binary outcome, and a treatment flag.

Two routes to reconciliation:

* the reduction: build a pseudo-outcome per cell (treated mean minus
  control mean), weight cells uniformly or by size, and hand the result to
  the core engine as an ordinary weighted dataset with predictor range
  [-1, 1];
* the standalone unit-level loop: identical structure, but the label-side
  means are treatment-conditional means pooled over the units of the
  current disagreement region, so no per-cell pseudo-outcome needs to
  exist. Cells without overlap are tolerated until a region's units are
  all treated or all control, which is a hard error naming the round.

With exactly balanced within-cell assignment and by-size weights the two
routes compute identical quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import Dataset, GroupIndicator, Predictor, round_to_grid
from .engine import CANDIDATE_ORDER, ReconcileParams, ReconcileResult, RoundRecord, reconcile
from .errors import AlignmentError, DegenerateInputError, OverlapError, ParameterError

__all__ = [
    "CausalDataset",
    "CatePseudoDataset",
    "CateEstimatorVector",
    "build_pseudo_dataset",
    "reconcile_cate",
    "reconcile_cate_unit_level",
    "cate_brier",
]


@dataclass(frozen=True)
class CausalDataset:
    """Units with a cell assignment, binary outcome, and treatment flag."""

    cells: np.ndarray
    y: np.ndarray
    t: np.ndarray
    ids: tuple = ()

    def __post_init__(self):
        cells = np.array(self.cells, dtype=int, copy=True)
        y = np.array(self.y, dtype=float, copy=True)
        t = np.array(self.t, dtype=bool, copy=True)
        if cells.ndim != 1 or cells.size < 1:
            raise ParameterError("cells must be a non-empty 1-d vector")
        if y.shape != cells.shape or t.shape != cells.shape:
            raise AlignmentError("cells, y, t must share one length")
        if cells.min() < 0:
            raise ParameterError("cell ids must be non-negative")
        if not np.all((y == 0.0) | (y == 1.0)):
            bad = int(np.flatnonzero((y != 0.0) & (y != 1.0))[0])
            raise ParameterError(f"outcomes must be binary; unit {bad} has y={y[bad]}")
        for a in (cells, y, t):
            a.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "t", t)
        ids = tuple(self.ids) if self.ids else tuple(str(i) for i in range(cells.size))
        if len(ids) != cells.size:
            raise AlignmentError("one id per unit required")
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.cells.size

    @property
    def n_cells(self) -> int:
        return int(self.cells.max()) + 1

    def cell_counts(self) -> np.ndarray:
        return np.bincount(self.cells, minlength=self.n_cells)


@dataclass(frozen=True)
class CatePseudoDataset:
    """Per-cell pseudo-outcomes and weights; excluded cells carry weight 0."""

    pseudo_outcome: np.ndarray
    weight: np.ndarray
    excluded_cells: tuple[int, ...]
    weighting: str

    def __post_init__(self):
        p = np.array(self.pseudo_outcome, dtype=float, copy=True)
        w = np.array(self.weight, dtype=float, copy=True)
        if p.shape != w.shape or p.ndim != 1:
            raise AlignmentError("pseudo_outcome and weight must share one length")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "pseudo_outcome", p)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "excluded_cells", tuple(int(c) for c in self.excluded_cells))

    @property
    def n_cells(self) -> int:
        return self.pseudo_outcome.size

    @property
    def included(self) -> np.ndarray:
        mask = np.ones(self.n_cells, dtype=bool)
        mask[list(self.excluded_cells)] = False
        return mask

    def included_cells(self) -> np.ndarray:
        return np.flatnonzero(self.included)

    def as_dataset(self) -> Dataset:
        """The included cells as a weighted core dataset (labels = pseudo-outcomes)."""
        inc = self.included
        return Dataset(
            labels=self.pseudo_outcome[inc],
            ids=tuple(str(c) for c in np.flatnonzero(inc)),
            weights=self.weight[inc],
        )


@dataclass(frozen=True)
class CateEstimatorVector:
    """One estimator's per-cell effect estimates with provenance."""

    values: np.ndarray
    range: tuple[float, float] = (-1.0, 1.0)
    label: str = ""

    def __post_init__(self):
        # delegate validation, then keep the frozen array
        p = Predictor(values=self.values, range=self.range)
        object.__setattr__(self, "values", p.values)
        object.__setattr__(self, "range", p.range)

    @property
    def n_cells(self) -> int:
        return self.values.size

    def as_predictor(self, mask: np.ndarray | None = None) -> Predictor:
        values = self.values if mask is None else self.values[mask]
        return Predictor(values=values, range=self.range)


def build_pseudo_dataset(cd: CausalDataset, weighting: str = "uniform") -> CatePseudoDataset:
    """Per cell: treated mean minus control mean; no-overlap cells are excluded.

    ``uniform`` weights included cells equally; ``by_cell_size`` weights
    them by unit count. Weights sum to 1 over included cells.
    """
    if weighting not in ("uniform", "by_cell_size"):
        raise ParameterError(f"unknown weighting {weighting!r}")
    n_cells = cd.n_cells
    treated_n = np.bincount(cd.cells[cd.t], minlength=n_cells)
    control_n = np.bincount(cd.cells[~cd.t], minlength=n_cells)
    treated_sum = np.bincount(cd.cells[cd.t], weights=cd.y[cd.t], minlength=n_cells)
    control_sum = np.bincount(cd.cells[~cd.t], weights=cd.y[~cd.t], minlength=n_cells)

    included = (treated_n > 0) & (control_n > 0)
    if not included.any():
        raise DegenerateInputError("every cell violates overlap; no pseudo-outcomes")
    pseudo = np.zeros(n_cells)
    pseudo[included] = (
        treated_sum[included] / treated_n[included]
        - control_sum[included] / control_n[included]
    )
    weight = np.zeros(n_cells)
    if weighting == "uniform":
        weight[included] = 1.0 / included.sum()
    else:
        counts = cd.cell_counts()[included]
        weight[included] = counts / counts.sum()
    return CatePseudoDataset(
        pseudo_outcome=pseudo,
        weight=weight,
        excluded_cells=tuple(int(c) for c in np.flatnonzero(~included)),
        weighting=weighting,
    )


def cate_brier(t: CateEstimatorVector, pd: CatePseudoDataset) -> float:
    """Weighted mean squared error against the pseudo-outcomes."""
    if t.n_cells != pd.n_cells:
        raise AlignmentError(f"estimator has {t.n_cells} cells, dataset {pd.n_cells}")
    sq = (t.values - pd.pseudo_outcome) ** 2
    return float(np.dot(pd.weight, sq) / pd.weight.sum())


def reconcile_cate(
    t1: CateEstimatorVector,
    t2: CateEstimatorVector,
    pd: CatePseudoDataset,
    params: ReconcileParams,
) -> ReconcileResult:
    """The reduction: run the core engine on the included-cell pseudo dataset.

    The returned result (models, trace groups) is indexed by the included
    cells, in the order of ``pd.included_cells()``; excluded cells are
    never patched and keep whatever estimate they had.
    """
    if t1.n_cells != pd.n_cells or t2.n_cells != pd.n_cells:
        raise AlignmentError("estimators must align to the pseudo dataset cells")
    inc = pd.included
    return reconcile(t1.as_predictor(inc), t2.as_predictor(inc), pd.as_dataset(), params)


def _pooled_effect(cd: CausalDataset, unit_mask: np.ndarray, round_idx: int) -> float:
    treated = unit_mask & cd.t
    control = unit_mask & ~cd.t
    if not treated.any() or not control.any():
        raise OverlapError(
            f"round {round_idx}: disagreement region has "
            f"{int(treated.sum())} treated and {int(control.sum())} control units"
        )
    return float(cd.y[treated].mean() - cd.y[control].mean())


def reconcile_cate_unit_level(
    t1: CateEstimatorVector,
    t2: CateEstimatorVector,
    cd: CausalDataset,
    params: ReconcileParams,
) -> ReconcileResult:
    """The standalone loop over cells, with unit-level treatment-conditional means.

    Cell masses are unit shares; the label-side mean of a region is the
    pooled treated-minus-control outcome mean over the region's units.
    Brier bookkeeping (round records, default round cap) is measured
    against per-cell pseudo-outcomes over the overlapping cells, weighted
    by size.
    """
    n_cells = cd.n_cells
    if t1.n_cells != n_cells or t2.n_cells != n_cells:
        raise AlignmentError(
            f"estimators have {t1.n_cells}/{t2.n_cells} cells, data has {n_cells}"
        )
    if t1.range != t2.range:
        raise ParameterError("estimators must declare one common range")
    lo, hi = t1.range
    eps, alpha = params.epsilon, params.alpha

    cell_mass = cd.cell_counts() / cd.n
    pd = build_pseudo_dataset(cd, weighting="by_cell_size")
    book_w = pd.weight

    def book_brier(values: np.ndarray) -> float:
        return float(np.dot(book_w, (values - pd.pseudo_outcome) ** 2))

    m = params.m if params.m is not None else math.ceil(2.0 / (math.sqrt(alpha) * eps))
    cap = params.max_rounds
    if cap is None:
        total = book_brier(t1.values) + book_brier(t2.values)
        cap = math.ceil(total * 16.0 / (alpha * eps**2)) + 1
    resolved = replace(params, m=m, max_rounds=cap)

    cur = {1: t1.values.copy(), 2: t2.values.copy()}
    counters = {1: 0, 2: 0}
    trace: list[RoundRecord] = []
    terminated_by = "round_cap"
    while True:
        diff = cur[1] - cur[2]
        sides = {">": diff > eps, "<": diff < -eps}
        mass = float(cell_mass[sides[">"] | sides["<"]].sum())
        if mass < alpha:
            terminated_by = "converged"
            break
        if len(trace) >= cap:
            break

        best = None
        for i, direction in CANDIDATE_ORDER:
            side = sides[direction]
            side_mass = float(cell_mass[side].sum())
            if side_mass == 0.0:
                score, gap = 0.0, 0.0
            else:
                v_star = _pooled_effect(cd, side[cd.cells], len(trace))
                v_i = float(np.dot(cell_mass[side], cur[i][side]) / side_mass)
                gap = v_star - v_i
                score = side_mass * gap * gap
            if best is None or score > best[0]:
                best = (score, i, direction, gap, side_mass)

        _, i, direction, delta_raw, side_mass = best
        side = sides[direction]
        delta = round_to_grid(delta_raw, m)
        before = book_brier(cur[i])
        cur[i] = np.where(side, np.clip(cur[i] + delta, lo, hi), cur[i])
        trace.append(
            RoundRecord(
                t=len(trace),
                patched_model=i,
                direction=direction,
                group=GroupIndicator(side),
                group_mass=side_mass,
                delta_raw=delta_raw,
                delta=delta,
                brier_before=before,
                brier_after=book_brier(cur[i]),
                disagreement_mass_before=mass,
            )
        )
        counters[i] += 1

    return ReconcileResult(
        f1_final=Predictor(values=cur[1], range=(lo, hi)),
        f2_final=Predictor(values=cur[2], range=(lo, hi)),
        t1=counters[1],
        t2=counters[2],
        trace=tuple(trace),
        terminated_by=terminated_by,
        params=resolved,
    )
