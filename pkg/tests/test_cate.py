import numpy as np
import pytest

from reconcile.cate import (
    CatePseudoDataset,
    CateEstimatorVector,
    CausalDataset,
    build_pseudo_dataset,
    cate_brier,
    reconcile_cate,
    reconcile_cate_unit_level,
)
from reconcile.engine import ReconcileParams
from reconcile.errors import (
    AlignmentError,
    DegenerateInputError,
    OverlapError,
    ParameterError,
)
from reconcile.synth import gen_cate_estimator_pair, gen_synthetic_causal

PARAMS = ReconcileParams(alpha=0.01, epsilon=0.04)


def small_causal():
    # cell 0: treated mean 0.7 (7/10), control mean 0.4 (4/10)
    # cell 1: all treated (overlap violation)
    cells = [0] * 20 + [1] * 4
    t = [True] * 10 + [False] * 10 + [True] * 4
    y = [1] * 7 + [0] * 3 + [1] * 4 + [0] * 6 + [1] * 4
    return CausalDataset(cells=cells, y=y, t=t)


class TestCausalDataset:
    def test_rejects_nonbinary_outcome(self):
        with pytest.raises(ParameterError):
            CausalDataset(cells=[0], y=[0.5], t=[True])

    def test_rejects_misaligned(self):
        with pytest.raises(AlignmentError):
            CausalDataset(cells=[0, 1], y=[1], t=[True])


class TestPseudoDataset:
    def test_treated_minus_control(self):
        pd = build_pseudo_dataset(small_causal())
        assert pd.pseudo_outcome[0] == pytest.approx(0.3)

    def test_overlap_violation_excluded_and_listed(self):
        pd = build_pseudo_dataset(small_causal())
        assert pd.excluded_cells == (1,)
        assert pd.weight[1] == 0.0
        assert list(pd.included_cells()) == [0]

    def test_all_cells_excluded_errors(self):
        cd = CausalDataset(cells=[0, 0], y=[1, 0], t=[True, True])
        with pytest.raises(DegenerateInputError):
            build_pseudo_dataset(cd)

    def test_weightings(self):
        cells = [0] * 4 + [1] * 12
        t = ([True, False] * 2) + ([True, False] * 6)
        y = [0] * 16
        cd = CausalDataset(cells=cells, y=y, t=t)
        uni = build_pseudo_dataset(cd, "uniform")
        size = build_pseudo_dataset(cd, "by_cell_size")
        assert list(uni.weight) == [0.5, 0.5]
        assert size.weight[0] == pytest.approx(0.25)
        assert size.weight[1] == pytest.approx(0.75)

    def test_null_effect_concentrates_near_zero(self):
        cd, tau = gen_synthetic_causal(30, 400, effect_prior=0.0, seed=4)
        pd = build_pseudo_dataset(cd)
        # per-cell sampling noise: sd <= sqrt(0.25/200 + 0.25/200) = 0.05
        assert np.max(np.abs(pd.pseudo_outcome)) <= 5 * 0.05

    def test_known_effect_recovered(self):
        cd, tau = gen_synthetic_causal(20, 1000, effect_prior=0.3, seed=9)
        pd = build_pseudo_dataset(cd)
        assert np.all(np.abs(pd.pseudo_outcome - 0.3) <= 5 * np.sqrt(0.5 / 500))


class TestCateBrier:
    def uniform_pd(self, pseudo):
        pseudo = np.asarray(pseudo, dtype=float)
        w = np.full(pseudo.size, 1.0 / pseudo.size)
        return CatePseudoDataset(pseudo_outcome=pseudo, weight=w,
                                 excluded_cells=(), weighting="uniform")

    def test_exact_match_is_zero(self):
        pd = self.uniform_pd([0.2, -0.1])
        t = CateEstimatorVector(values=[0.2, -0.1])
        assert cate_brier(t, pd) == 0.0

    def test_uniform_arithmetic(self):
        pd = self.uniform_pd([0.3, 0.3])
        t = CateEstimatorVector(values=[0.3, 0.1])
        assert cate_brier(t, pd) == pytest.approx(0.02)

    def test_zero_weight_rows_ignored(self):
        pd = CatePseudoDataset(pseudo_outcome=[0.3, 0.3], weight=[1.0, 0.0],
                               excluded_cells=(1,), weighting="uniform")
        t = CateEstimatorVector(values=[0.3, 0.1])
        assert cate_brier(t, pd) == 0.0


class TestReduction:
    def test_identical_estimators_zero_rounds(self):
        cd, tau = gen_synthetic_causal(10, 100, effect_prior=0.2, seed=1)
        pd = build_pseudo_dataset(cd)
        t = CateEstimatorVector(values=tau)
        res = reconcile_cate(t, t, pd, PARAMS)
        assert res.rounds == 0 and res.converged

    def test_injected_disagreement_reconciles(self):
        cd, tau = gen_synthetic_causal(50, 200, effect_prior=lambda r, k: r.uniform(-0.3, 0.3, k), seed=2)
        pd = build_pseudo_dataset(cd, "by_cell_size")
        t1, t2 = gen_cate_estimator_pair(tau, seed=3)
        res = reconcile_cate(t1, t2, pd, PARAMS)
        assert res.converged
        assert res.final_disagreement_mass(pd.as_dataset()) < PARAMS.alpha
        for rec in res.trace:
            assert rec.brier_after <= rec.brier_before + 1e-12

    def test_excluded_cells_never_in_region_or_patch(self):
        cd = small_causal()
        pd = build_pseudo_dataset(cd)
        t1 = CateEstimatorVector(values=[0.3, 0.9])
        t2 = CateEstimatorVector(values=[-0.2, -0.9])  # disagrees on both cells
        res = reconcile_cate(t1, t2, pd, ReconcileParams(alpha=0.5, epsilon=0.04))
        # the engine only ever saw the single included cell
        assert res.f1_final.n == 1 and res.f2_final.n == 1
        for rec in res.trace:
            assert rec.group.n == 1


class TestUnitLevel:
    def test_identical_estimators_zero_rounds(self):
        cd, tau = gen_synthetic_causal(10, 100, effect_prior=0.1, seed=5)
        t = CateEstimatorVector(values=tau)
        res = reconcile_cate_unit_level(t, t, cd, PARAMS)
        assert res.rounds == 0 and res.converged

    def test_converges_with_improving_brier(self):
        cd, tau = gen_synthetic_causal(50, 200, effect_prior=lambda r, k: r.uniform(-0.3, 0.3, k), seed=6)
        t1, t2 = gen_cate_estimator_pair(tau, seed=7)
        res = reconcile_cate_unit_level(t1, t2, cd, PARAMS)
        assert res.converged
        floor = PARAMS.min_round_improvement - 1e-9
        for rec in res.trace:
            assert rec.brier_before - rec.brier_after >= floor

    def test_one_sided_region_raises_overlap_error(self):
        cd = small_causal()
        # estimators disagree only on cell 1, whose units are all treated
        t1 = CateEstimatorVector(values=[0.3, 0.9])
        t2 = CateEstimatorVector(values=[0.3, -0.9])
        with pytest.raises(OverlapError, match="round 0"):
            reconcile_cate_unit_level(t1, t2, cd, ReconcileParams(alpha=0.05, epsilon=0.04))

    def test_round1_gap_matches_reduction_under_balance(self):
        for seed in range(5):
            cd, tau = gen_synthetic_causal(
                40, 100, effect_prior=lambda r, k: r.uniform(-0.3, 0.3, k), seed=seed
            )
            t1, t2 = gen_cate_estimator_pair(tau, seed=seed + 50)
            pd = build_pseudo_dataset(cd, "by_cell_size")
            red = reconcile_cate(t1, t2, pd, PARAMS)
            unit = reconcile_cate_unit_level(t1, t2, cd, PARAMS)
            assert red.trace and unit.trace
            r0, u0 = red.trace[0], unit.trace[0]
            assert (r0.patched_model, r0.direction) == (u0.patched_model, u0.direction)
            assert r0.delta_raw == pytest.approx(u0.delta_raw, abs=1e-9)
