import math

import numpy as np
import pytest

from reconcile.core import (
    Dataset,
    GroupIndicator,
    Predictor,
    brier_score,
    disagreement_region,
    group_mass,
    patch,
)
from reconcile.engine import (
    ReconcileParams,
    apply_trace_predicates,
    default_grid_resolution,
    reconcile,
    select_update,
    theoretical_round_bound,
)
from reconcile.errors import EmptyGroupError, ParameterError

from oracles import naive_reconcile


def ds(labels, **kw):
    return Dataset(labels=np.asarray(labels, dtype=float), **kw)


def pred(values, rng=(0.0, 1.0)):
    return Predictor(values=np.asarray(values, dtype=float), range=rng)


def random_instance(seed, n=200):
    """A label vector plus two deliberately disagreeing predictors."""
    rng = np.random.default_rng(seed)
    f_star = rng.uniform(0, 1, n)
    labels = (rng.uniform(0, 1, n) < f_star).astype(float)
    f1 = np.clip(f_star + rng.normal(0, 0.05, n), 0, 1)
    f2 = f1.copy()
    k = max(1, int(0.15 * n))
    region = rng.choice(n, size=k, replace=False)
    f2[region] = np.clip(f2[region] + rng.choice([-0.5, 0.5], size=k), 0, 1)
    return pred(f1), pred(f2), ds(labels)


def walk_states(f1, f2, trace):
    """Yield the (f1, f2) state entering each round, replaying recorded patches."""
    cur = {1: f1, 2: f2}
    for rec in trace:
        yield cur[1], cur[2], rec
        cur[rec.patched_model] = patch(cur[rec.patched_model], rec.group, rec.delta)
    yield cur[1], cur[2], None


class TestParams:
    def test_grid_resolution_formula(self):
        assert default_grid_resolution(0.1, 0.2) == 32
        assert default_grid_resolution(0.05, 0.2) == math.ceil(2 / (math.sqrt(0.05) * 0.2))

    def test_bound_arithmetic(self):
        # B1 = B2 = 0.25, alpha=0.05, eps=0.2 -> 0.5 * 16 / 0.002 = 4000
        d = ds([1, 0])
        f1 = pred([0.5, 0.5])
        f2 = pred([0.5, 0.5])
        assert theoretical_round_bound(f1, f2, d, 0.05, 0.2) == pytest.approx(4000.0)

    def test_invalid_parameters(self):
        with pytest.raises(ParameterError):
            ReconcileParams(alpha=0.0, epsilon=0.2)
        with pytest.raises(ParameterError):
            ReconcileParams(alpha=0.05, epsilon=1.5)
        with pytest.raises(ParameterError):
            ReconcileParams(alpha=0.05, epsilon=0.2, m=0)


class TestSelectUpdate:
    def test_worked_example(self):
        d = ds([1, 1, 0, 0])
        f1 = pred([0.9, 0.9, 0.1, 0.1])
        f2 = pred([0.1, 0.1, 0.1, 0.1])
        i, direction, group, score = select_update(f1, f2, d, 0.2)
        assert (i, direction) == (2, ">")
        assert list(group.indices()) == [0, 1]
        assert score == pytest.approx(0.5 * 0.9**2)

    def test_symmetric_swap_selects_mirrored(self):
        d = ds([1, 1, 0, 0])
        f1 = pred([0.1, 0.1, 0.1, 0.1])
        f2 = pred([0.9, 0.9, 0.1, 0.1])
        i, direction, _, _ = select_update(f1, f2, d, 0.2)
        assert (i, direction) == (1, "<")

    def test_one_sided_region_never_selects_empty_side(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = 30
            labels = rng.integers(0, 2, n).astype(float)
            base = rng.uniform(0, 0.4, n)
            above = np.clip(base + 0.5, 0, 1)  # f1 > f2 everywhere they disagree
            i, direction, group, _ = select_update(
                pred(above), pred(base), ds(labels), 0.2
            )
            assert direction == ">"
            assert not group.is_empty

    def test_empty_region_is_a_caller_bug(self):
        d = ds([1, 0])
        f = pred([0.5, 0.5])
        with pytest.raises(EmptyGroupError):
            select_update(f, f, d, 0.2)


class TestHandTrace:
    """The fully hand-computed 4-point instance."""

    def run(self):
        d = ds([1, 1, 0, 0])
        f1 = pred([0.9, 0.9, 0.1, 0.1])
        f2 = pred([0.1, 0.1, 0.1, 0.1])
        return reconcile(f1, f2, d, ReconcileParams(alpha=0.1, epsilon=0.2)), d

    def test_single_round_patching_model_2(self):
        res, _ = self.run()
        assert res.rounds == 1 and res.t1 == 0 and res.t2 == 1
        assert res.terminated_by == "converged"

    def test_round_values(self):
        res, d = self.run()
        rec = res.trace[0]
        assert res.params.m == 32
        assert rec.patched_model == 2 and rec.direction == ">"
        assert list(rec.group.indices()) == [0, 1]
        assert rec.delta_raw == pytest.approx(0.9)
        assert rec.delta == 29 / 32
        assert rec.brier_before == pytest.approx(0.41)
        assert rec.brier_after == pytest.approx(0.005)
        assert rec.disagreement_mass_before == 0.5

    def test_final_models(self):
        res, d = self.run()
        assert list(res.f2_final.values) == [1.0, 1.0, 0.1, 0.1]
        assert list(res.f1_final.values) == [0.9, 0.9, 0.1, 0.1]
        assert res.final_disagreement_mass(d) == 0.0


class TestReconcileBasics:
    def test_identical_inputs_zero_rounds(self):
        d = ds([1, 0, 1])
        f = pred([0.7, 0.2, 0.9])
        res = reconcile(f, f, d, ReconcileParams(alpha=0.05, epsilon=0.2))
        assert res.rounds == 0 and res.converged
        assert np.array_equal(res.f1_final.values, f.values)
        assert np.array_equal(res.f2_final.values, f.values)

    def test_round_cap_is_flagged_not_hidden(self):
        d = ds([1, 1, 0, 0])
        f1 = pred([0.9, 0.9, 0.1, 0.1])
        f2 = pred([0.1, 0.1, 0.1, 0.1])
        res = reconcile(f1, f2, d, ReconcileParams(alpha=0.1, epsilon=0.2, max_rounds=0))
        assert res.terminated_by == "round_cap"
        assert res.rounds == 0

    def test_determinism(self):
        f1, f2, d = random_instance(11)
        params = ReconcileParams(alpha=0.05, epsilon=0.2)
        a = reconcile(f1, f2, d, params)
        b = reconcile(f1, f2, d, params)
        assert a.rounds == b.rounds and a.t1 == b.t1
        assert np.array_equal(a.f1_final.values, b.f1_final.values)
        assert np.array_equal(a.f2_final.values, b.f2_final.values)
        for ra, rb in zip(a.trace, b.trace):
            assert ra.delta == rb.delta and ra.patched_model == rb.patched_model
            assert np.array_equal(ra.group.mask, rb.group.mask)


class TestTheoremProperties:
    SEEDS = range(100)
    PARAMS = ReconcileParams(alpha=0.05, epsilon=0.2)

    def test_per_round_improvement_and_residual(self):
        floor = self.PARAMS.min_round_improvement - 1e-9
        for seed in self.SEEDS:
            f1, f2, d = random_instance(seed)
            res = reconcile(f1, f2, d, self.PARAMS)
            for rec in res.trace:
                assert rec.brier_before - rec.brier_after >= floor, seed
                assert abs(rec.delta_raw - rec.delta) <= 1.0 / (2 * res.params.m), seed

    def test_theorem_three_part_guarantees(self):
        a, e = self.PARAMS.alpha, self.PARAMS.epsilon
        for seed in self.SEEDS:
            f1, f2, d = random_instance(seed)
            res = reconcile(f1, f2, d, self.PARAMS)
            assert res.converged, seed
            bound_t = theoretical_round_bound(f1, f2, d, a, e)
            assert res.rounds <= bound_t, seed
            step = a * e**2 / 16.0
            assert brier_score(res.f1_final, d) <= brier_score(f1, d) - res.t1 * step + 1e-9
            assert brier_score(res.f2_final, d) <= brier_score(f2, d) - res.t2 * step + 1e-9
            assert res.final_disagreement_mass(d) < a

    def test_lemma_brier_gap_on_converged_runs(self):
        a, e = self.PARAMS.alpha, self.PARAMS.epsilon
        for seed in self.SEEDS:
            f1, f2, d = random_instance(seed)
            res = reconcile(f1, f2, d, self.PARAMS)
            if res.converged:
                gap = abs(brier_score(res.f1_final, d) - brier_score(res.f2_final, d))
                assert gap <= 4 * e + 3 * a + 1e-9, seed

    def test_untouched_agreement_rows_unchanged(self):
        for seed in list(self.SEEDS)[:30]:
            f1, f2, d = random_instance(seed)
            res = reconcile(f1, f2, d, self.PARAMS)
            eps = self.PARAMS.epsilon
            always_agreeing = np.ones(d.n, dtype=bool)
            for s1, s2, rec in walk_states(f1, f2, res.trace):
                gap_ok = np.abs(s1.values - s2.values) <= eps
                always_agreeing &= gap_ok
                if rec is not None:
                    assert not np.any(rec.group.mask & gap_ok)
            idx = np.flatnonzero(always_agreeing)
            assert np.array_equal(res.f1_final.values[idx], f1.values[idx])
            assert np.array_equal(res.f2_final.values[idx], f2.values[idx])

    def test_group_always_inside_disagreement_region(self):
        for seed in list(self.SEEDS)[:30]:
            f1, f2, d = random_instance(seed)
            res = reconcile(f1, f2, d, self.PARAMS)
            for s1, s2, rec in walk_states(f1, f2, res.trace):
                if rec is None:
                    break
                region = disagreement_region(s1, s2, self.PARAMS.epsilon)
                assert not np.any(rec.group.mask & ~region.u.mask)
                assert rec.disagreement_mass_before == pytest.approx(group_mass(region.u, d))


class TestAgainstNaiveOracle:
    def test_full_trace_agreement(self):
        params = ReconcileParams(alpha=0.05, epsilon=0.2)
        for seed in range(12):
            f1, f2, d = random_instance(seed, n=40)
            res = reconcile(f1, f2, d, params)
            ref = naive_reconcile(
                list(f1.values), list(f2.values), list(d.labels), 0.05, 0.2
            )
            assert res.terminated_by == ref["terminated_by"]
            assert (res.t1, res.t2) == (ref["t1"], ref["t2"])
            for rec, rref in zip(res.trace, ref["trace"]):
                assert rec.patched_model == rref["patched_model"]
                assert rec.direction == rref["direction"]
                assert list(rec.group.mask) == rref["group"]
                assert rec.delta == rref["delta"]
                assert rec.delta_raw == pytest.approx(rref["delta_raw"], abs=1e-12)
            assert np.allclose(res.f1_final.values, ref["f1"], atol=1e-12)
            assert np.allclose(res.f2_final.values, ref["f2"], atol=1e-12)

    def test_weighted_run_matches_row_duplication(self):
        rng = np.random.default_rng(5)
        n = 30
        labels = rng.integers(0, 2, n).astype(float)
        v1 = rng.uniform(0, 1, n)
        v2 = np.clip(v1 + rng.choice([-0.6, 0.0, 0.6], n, p=[0.2, 0.6, 0.2]), 0, 1)
        counts = rng.integers(1, 4, n)
        d_w = ds(labels, weights=counts.astype(float))
        rep = np.repeat(np.arange(n), counts)
        d_dup = ds(labels[rep])
        params = ReconcileParams(alpha=0.05, epsilon=0.2)
        res_w = reconcile(pred(v1), pred(v2), d_w, params)
        res_dup = reconcile(pred(v1[rep]), pred(v2[rep]), d_dup, params)
        assert res_w.rounds == res_dup.rounds
        assert np.allclose(res_w.f1_final.values, res_dup.f1_final.values[np.cumsum(counts) - 1])
        assert np.allclose(res_w.f2_final.values, res_dup.f2_final.values[np.cumsum(counts) - 1])


class TestTransfer:
    def test_replay_on_same_pair_reproduces_finals(self):
        f1, f2, d = random_instance(21)
        params = ReconcileParams(alpha=0.05, epsilon=0.2)
        res = reconcile(f1, f2, d, params)
        g1, g2 = apply_trace_predicates(f1, f2, res.trace, params.epsilon)
        assert np.array_equal(g1.values, res.f1_final.values)
        assert np.array_equal(g2.values, res.f2_final.values)

    def test_transfer_reduces_disagreement_on_heldout_like_rows(self):
        # a fresh sample from the same construction should see its gap shrink
        f1, f2, d = random_instance(31, n=400)
        params = ReconcileParams(alpha=0.05, epsilon=0.2)
        res = reconcile(
            pred(f1.values[:200]), pred(f2.values[:200]),
            ds(d.labels[:200]), params,
        )
        h1 = pred(f1.values[200:])
        h2 = pred(f2.values[200:])
        before = group_mass(
            disagreement_region(h1, h2, params.epsilon).u, ds(d.labels[200:])
        )
        t1, t2 = apply_trace_predicates(h1, h2, res.trace, params.epsilon)
        after = group_mass(
            disagreement_region(t1, t2, params.epsilon).u, ds(d.labels[200:])
        )
        assert after <= before
