"""Seeded synthetic generators for desk-scale experiments.

Ground truths are per-row success probabilities with Bernoulli labels.
Model pairs are admitted under the same two predicates used to screen real
experiment pairs: Brier scores within ``max_brier_gap`` of each other and
epsilon-disagreement mass at least ``min_disagreement_mass``. Generation
retries with fresh draws up to a bounded attempt budget and then fails
loudly with the last measured values.

Features are implicit: the reconciliation machinery only ever reads
predictions, so the three generation strategies are emulated structurally.
``perturb_regions`` shifts a random region of one model; the other two fit
piecewise-constant models on disjoint row halves (or on two different
partitions standing in for disjoint feature views), which disagree through
honest sampling noise while staying comparably accurate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cate import CausalDataset, CateEstimatorVector
from .core import Dataset, Predictor, brier_score, disagreement_region, group_mass
from .errors import GenerationError, ParameterError

__all__ = [
    "PairSpec",
    "gen_ground_truth",
    "gen_model_pair",
    "gen_random_predictor",
    "gen_synthetic_causal",
    "gen_cate_estimator_pair",
    "pair_is_admissible",
]

STRATEGIES = ("perturb_regions", "disjoint_rows", "disjoint_features")
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class PairSpec:
    """Admission thresholds and strategy for generating a disagreeing pair."""

    n: int
    strategy: str = "perturb_regions"
    max_brier_gap: float = 0.05
    min_disagreement_mass: float = 0.05
    dis_epsilon: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ParameterError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.max_brier_gap <= 0 or self.min_disagreement_mass <= 0 or self.dis_epsilon <= 0:
            raise ParameterError("admission thresholds must be positive")


def gen_ground_truth(n: int, seed: int, prior=None) -> tuple[Predictor, Dataset]:
    """Draw per-row probabilities (uniform prior by default) and Bernoulli labels."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = np.random.default_rng(seed)
    f_star = prior(rng, n) if prior is not None else rng.uniform(0.0, 1.0, n)
    f_star = np.asarray(f_star, dtype=float)
    labels = (rng.uniform(0.0, 1.0, n) < f_star).astype(float)
    return Predictor(values=f_star), Dataset(labels=labels)


def pair_is_admissible(f1: Predictor, f2: Predictor, d: Dataset, spec: PairSpec) -> bool:
    """Re-verify both admission predicates from the outputs alone."""
    gap = abs(brier_score(f1, d) - brier_score(f2, d))
    mass = group_mass(disagreement_region(f1, f2, spec.dis_epsilon).u, d)
    return gap <= spec.max_brier_gap and mass >= spec.min_disagreement_mass


def _binned_means(labels: np.ndarray, rows: np.ndarray, bins: np.ndarray, n_bins: int) -> np.ndarray:
    """Per-bin label means fitted on a row subset; empty bins fall back globally."""
    sums = np.bincount(bins[rows], weights=labels[rows], minlength=n_bins)
    counts = np.bincount(bins[rows], minlength=n_bins)
    overall = labels[rows].mean()
    means = np.where(counts > 0, sums / np.maximum(counts, 1), overall)
    return means


def _draw_pair(f_star: Predictor, d: Dataset, spec: PairSpec, rng) -> tuple[Predictor, Predictor]:
    n = d.n
    if spec.strategy == "perturb_regions":
        v1 = np.clip(f_star.values + rng.normal(0.0, 0.05, n), 0.0, 1.0)
        v2 = np.clip(f_star.values + rng.normal(0.0, 0.05, n), 0.0, 1.0)
        k = max(1, int(round(0.12 * n)))
        region = rng.choice(n, size=k, replace=False)
        v2[region] = np.clip(v2[region] + rng.choice([-0.5, 0.5]), 0.0, 1.0)
        return Predictor(values=v1), Predictor(values=v2)

    if spec.strategy == "disjoint_rows":
        n_bins = max(2, min(25, n // 4))
        bins = np.arange(n) * n_bins // n
        perm = rng.permutation(n)
        half_a, half_b = perm[: n // 2], perm[n // 2 :]
        m1 = _binned_means(d.labels, half_a, bins, n_bins)
        m2 = _binned_means(d.labels, half_b, bins, n_bins)
        return Predictor(values=m1[bins]), Predictor(values=m2[bins])

    # disjoint_features: two different partitions of the same rows
    n_bins = max(2, min(40, n // 3))
    view1 = np.arange(n) * n_bins // n
    view2 = rng.permutation(n) % n_bins
    all_rows = np.arange(n)
    m1 = _binned_means(d.labels, all_rows, view1, n_bins)
    m2 = _binned_means(d.labels, all_rows, view2, n_bins)
    return Predictor(values=m1[view1]), Predictor(values=m2[view2])


def gen_model_pair(f_star: Predictor, d: Dataset, spec: PairSpec) -> tuple[Predictor, Predictor]:
    """Draw pairs until both admission predicates hold; bounded retries."""
    last = None
    for attempt in range(MAX_ATTEMPTS):
        rng = np.random.default_rng([spec.seed, attempt])
        f1, f2 = _draw_pair(f_star, d, spec, rng)
        if pair_is_admissible(f1, f2, d, spec):
            return f1, f2
        last = (
            abs(brier_score(f1, d) - brier_score(f2, d)),
            group_mass(disagreement_region(f1, f2, spec.dis_epsilon).u, d),
        )
    raise GenerationError(
        f"no admissible pair in {MAX_ATTEMPTS} attempts "
        f"(strategy={spec.strategy}, last brier gap={last[0]:.4f}, "
        f"last disagreement mass={last[1]:.4f}; "
        f"need gap <= {spec.max_brier_gap} and mass >= {spec.min_disagreement_mass})"
    )


def gen_random_predictor(n: int, range: tuple[float, float], seed: int) -> Predictor:
    """I.i.d. uniform predictions over the given range."""
    rng = np.random.default_rng(seed)
    lo, hi = range
    return Predictor(values=rng.uniform(lo, hi, n), range=(lo, hi))


def gen_synthetic_causal(
    n_cells: int, units_per_cell: int, effect_prior, seed: int
) -> tuple[CausalDataset, np.ndarray]:
    """A balanced RCT with known per-cell effects.

    ``effect_prior`` is a constant or a callable (rng, n_cells) -> effects
    in [-1, 1]. Each cell draws a baseline rate compatible with its effect,
    assigns exactly half of its units to treatment (shuffled), and samples
    Bernoulli outcomes. Returns the data plus the true per-cell effect.
    """
    if n_cells < 1 or units_per_cell < 2:
        raise ParameterError("need n_cells >= 1 and units_per_cell >= 2")
    rng = np.random.default_rng(seed)
    if callable(effect_prior):
        tau = np.asarray(effect_prior(rng, n_cells), dtype=float)
    else:
        tau = np.full(n_cells, float(effect_prior))
    if np.any(np.abs(tau) > 1.0):
        raise ParameterError("effects must lie in [-1, 1]")

    base_lo = np.maximum(0.0, -tau)
    base_hi = np.minimum(1.0, 1.0 - tau)
    base = base_lo + rng.uniform(0.0, 1.0, n_cells) * (base_hi - base_lo)

    cells = np.repeat(np.arange(n_cells), units_per_cell)
    treated = np.zeros(n_cells * units_per_cell, dtype=bool)
    for c in range(n_cells):
        idx = np.arange(c * units_per_cell, (c + 1) * units_per_cell)
        picks = rng.permutation(units_per_cell)[: units_per_cell // 2]
        treated[idx[picks]] = True
    rate = base[cells] + tau[cells] * treated
    y = (rng.uniform(0.0, 1.0, cells.size) < rate).astype(float)
    return CausalDataset(cells=cells, y=y, t=treated), tau


def gen_cate_estimator_pair(
    true_tau: np.ndarray,
    seed: int,
    noise: float = 0.005,
    shift: float = 0.3,
    n_shift: int = 10,
    value_range: tuple[float, float] = (-1.0, 1.0),
) -> tuple[CateEstimatorVector, CateEstimatorVector]:
    """Two noisy copies of the truth, one shifted on a random block of cells.

    Shift signs alternate across the block, so the pair disagrees in both
    directions.
    """
    rng = np.random.default_rng(seed)
    tau = np.asarray(true_tau, dtype=float)
    lo, hi = value_range
    v1 = np.clip(tau + rng.normal(0.0, noise, tau.size), lo, hi)
    v2 = np.clip(tau + rng.normal(0.0, noise, tau.size), lo, hi)
    k = min(n_shift, tau.size)
    region = rng.choice(tau.size, size=k, replace=False)
    signs = rng.choice([-1.0, 1.0], size=k)
    v2[region] = np.clip(v2[region] + shift * signs, lo, hi)
    return (
        CateEstimatorVector(values=v1, range=value_range, label="truth+noise"),
        CateEstimatorVector(values=v2, range=value_range, label="truth+noise+shift"),
    )
