"""Command-line runner orchestrating the library end to end.

Every task reads CSV inputs, writes plot-ready CSV/JSON artifacts into the
output directory, and exits 0 on success, 1 if a theorem guarantee failed
to hold on the run's own outputs, 2 on input errors, and 3 if a run hit
its round cap. All randomness flows from ``--seed``; running the same
configuration twice produces byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import dataio
from .aggregation import (
    AggregationConfig,
    ModelSet,
    mean_aggregate,
    mode_aggregate,
    random_model_select,
    randomized_prediction,
    robustness_sweep,
    sequential_reconcile,
)
from .cate import build_pseudo_dataset, reconcile_cate, reconcile_cate_unit_level
from .core import (
    Dataset,
    GroupIndicator,
    Predictor,
    brier_score,
    disagreement_region,
    group_mass,
    restricted_brier,
)
from .engine import ReconcileParams, apply_trace_predicates, reconcile
from .errors import ParameterError, ReconcileError
from .fairness import fairness_experiment
from .maaudit import audit_trace
from .multiplicity import multiplicity_report, pairwise_disagreement_stats
from .synth import PairSpec, gen_cate_estimator_pair, gen_ground_truth, gen_model_pair, gen_synthetic_causal

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INPUT = 2
EXIT_ROUND_CAP = 3

TASKS = ("reconcile", "seq", "aggregate", "metrics", "cate", "fairness", "robustness", "synth")


@dataclass(frozen=True)
class RunConfig:
    """Validated run parameters; see the CLI flags for field meanings."""

    task: str
    out: Path
    alpha: float
    epsilon: float
    seed: int = 0
    value_range: tuple[float, float] | None = None
    labels: Path | None = None
    predictions: Path | None = None
    causal: Path | None = None
    estimators: Path | None = None
    reps: int = 1
    split: tuple[float, float, float] | None = None
    group: str | None = None
    threshold: float = 0.5
    weighting: str = "uniform"
    variant: str = "reduction"
    strategy: str = "perturb_regions"
    n: int = 1000
    k_range: tuple[int, ...] | None = None
    max_rounds: int | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ParameterError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.reps < 1:
            raise ParameterError("reps must be >= 1")
        ReconcileParams(alpha=self.alpha, epsilon=self.epsilon)  # validates

    def params(self) -> ReconcileParams:
        return ReconcileParams(
            alpha=self.alpha, epsilon=self.epsilon, max_rounds=self.max_rounds
        )

    def prediction_range(self) -> tuple[float, float]:
        return self.value_range if self.value_range else (0.0, 1.0)

    def estimator_range(self) -> tuple[float, float]:
        return self.value_range if self.value_range else (-1.0, 1.0)


def _require(cfg: RunConfig, *fields: str) -> None:
    for f in fields:
        if getattr(cfg, f) is None:
            raise ParameterError(f"task {cfg.task!r} requires --{f}")


def _load_pair(cfg: RunConfig) -> tuple[Dataset, ModelSet]:
    _require(cfg, "labels", "predictions")
    d = dataio.load_labels(cfg.labels)
    ms = dataio.load_predictions(cfg.predictions, d, cfg.prediction_range())
    return d, ms


def _finish_result(cfg, out, task, res, f1, f2, d) -> tuple[int, list[dict]]:
    """Write trace + summary, verify the bounds, map to an exit code."""
    dataio.write_json(out / "trace.json", dataio.trace_payload(res, seed=cfg.seed))
    rows = [dataio.result_summary_row(task, res, f1, f2, d, cfg.seed)]
    problems = dataio.verify_theorem(res, f1, f2, d)
    for p in problems:
        print(f"invariant violation: {p}", file=sys.stderr)
    if problems:
        return EXIT_INVARIANT, rows
    if not res.converged:
        print("round cap reached before convergence", file=sys.stderr)
        return EXIT_ROUND_CAP, rows
    return EXIT_OK, rows


def _task_reconcile(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    if len(ms) < 2:
        raise ParameterError("reconcile needs at least two prediction columns")
    f1, f2 = ms.models[0], ms.models[1]
    params = cfg.params()

    if cfg.split is None:
        res = reconcile(f1, f2, d, params)
        code, rows = _finish_result(cfg, out, "reconcile", res, f1, f2, d)
        rep = audit_trace(res, d, beta=params.alpha * params.epsilon**2)
        dataio.write_json(out / "ma_audit.json", _audit_payload(rep))
        return code, rows

    train_ids, val_ids, test_ids = dataio.split_dataset(d, cfg.split, cfg.seed)
    d_val, val_idx = dataio.subset_by_ids(d, val_ids)
    res = reconcile(
        Predictor(values=f1.values[val_idx], range=f1.range),
        Predictor(values=f2.values[val_idx], range=f2.range),
        d_val,
        params,
    )
    code, rows = _finish_result(
        cfg, out, "reconcile[val]",
        res,
        Predictor(values=f1.values[val_idx], range=f1.range),
        Predictor(values=f2.values[val_idx], range=f2.range),
        d_val,
    )
    if test_ids:
        d_test, test_idx = dataio.subset_by_ids(d, test_ids)
        h1 = Predictor(values=f1.values[test_idx], range=f1.range)
        h2 = Predictor(values=f2.values[test_idx], range=f2.range)
        t1, t2 = apply_trace_predicates(h1, h2, res.trace, params.epsilon)
        rows.append(
            {
                "task": "reconcile[test]",
                "n": d_test.n,
                "alpha": params.alpha,
                "epsilon": params.epsilon,
                "m": res.params.m,
                "seed": cfg.seed,
                "rounds": res.rounds,
                "t1": res.t1,
                "t2": res.t2,
                "terminated_by": res.terminated_by,
                "brier1_before": brier_score(h1, d_test),
                "brier1_after": brier_score(t1, d_test),
                "brier2_before": brier_score(h2, d_test),
                "brier2_after": brier_score(t2, d_test),
                "disagreement_before": group_mass(
                    disagreement_region(h1, h2, params.epsilon).u, d_test
                ),
                "disagreement_after": group_mass(
                    disagreement_region(t1, t2, params.epsilon).u, d_test
                ),
            }
        )
    return code, rows


def _audit_payload(rep) -> dict:
    return {
        "schema": "ma-audit-v1",
        "beta": rep.beta,
        "violations": rep.violations,
        "max_excess": rep.max_excess,
        "per_group": [
            {
                "t": e.t,
                "direction": e.direction,
                "audited_model": e.audited_model,
                "mass": e.mass,
                "sq_gap": e.sq_gap,
                "bound": e.bound,
                "violated": e.violated,
            }
            for e in rep.per_group
        ],
    }


def _task_seq(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    if len(ms) < 2:
        raise ParameterError("seq needs at least two prediction columns")
    params = cfg.params()
    seq = sequential_reconcile(ms, d, params, AggregationConfig(seed=cfg.seed))
    dataio.write_json(out / "trace.json", dataio.sequential_trace_payload(seq, seed=cfg.seed))

    rows, code = [], EXIT_OK
    left = ms.models[0]
    for stage in seq.stages:
        right = ms.models[stage.index + 1]
        rows.append(
            dataio.result_summary_row(
                f"seq[{stage.index}]", stage.result, left, right, d, cfg.seed
            )
        )
        problems = dataio.verify_theorem(stage.result, left, right, d)
        for p in problems:
            print(f"invariant violation (stage {stage.index}): {p}", file=sys.stderr)
        if problems:
            code = EXIT_INVARIANT
        left = stage.survivor
    dataio.save_predictions(
        ModelSet(models=(seq.survivor,), labels=("survivor",)), d, out / "survivor.csv"
    )
    if code == EXIT_OK and seq.terminated_by == "round_cap":
        print("round cap reached in at least one stage", file=sys.stderr)
        code = EXIT_ROUND_CAP
    return code, rows


def _task_aggregate(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    params = cfg.params()
    outputs = {
        "mode": mode_aggregate(ms, cfg.threshold),
        "mean": mean_aggregate(ms),
        "randomized": randomized_prediction(ms, cfg.seed),
        "random_select": random_model_select(ms, cfg.seed),
    }
    if len(ms) >= 2:
        seq = sequential_reconcile(ms, d, params, AggregationConfig(seed=cfg.seed))
        outputs["sequential_reconcile"] = seq.survivor
    names = list(outputs)
    dataio.save_predictions(
        ModelSet(models=tuple(outputs[n] for n in names), labels=tuple(names)),
        d,
        out / "aggregated.csv",
    )
    rows = [
        {"task": "aggregate", "method": name, "brier": brier_score(outputs[name], d),
         "seed": cfg.seed}
        for name in names
    ]
    dataio.write_csv(out / "aggregate_scores.csv", rows, ["task", "method", "brier", "seed"])
    return EXIT_OK, []


def _task_metrics(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    rep = multiplicity_report(ms, cfg.epsilon)
    payload = {
        "schema": "multiplicity-report-v1",
        "ambiguity": rep.ambiguity,
        "discrepancy": rep.discrepancy,
        "epsilon_used": rep.epsilon_used,
        "variance_stats": vars(rep.variance_stats),
        "disagreement_stats": None
        if rep.disagreement_stats is None
        else vars(rep.disagreement_stats),
        "n_models": len(ms),
    }
    dataio.write_json(out / "multiplicity.json", payload)
    rows = []
    if len(ms) >= 2:
        from itertools import combinations

        for i, j in combinations(range(len(ms)), 2):
            mass = group_mass(
                disagreement_region(ms.models[i], ms.models[j], cfg.epsilon).u, d
            )
            rows.append({"model_i": ms.labels[i], "model_j": ms.labels[j], "mass": mass})
    dataio.write_csv(out / "pair_masses.csv", rows, ["model_i", "model_j", "mass"])
    return EXIT_OK, []


def _task_fairness(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    if len(ms) < 2:
        raise ParameterError("fairness needs at least two prediction columns")
    group_cols = sorted(d.groups)
    name = cfg.group or (group_cols[0] if group_cols else None)
    if name is None or name not in d.groups:
        raise ParameterError(
            f"fairness needs a minority group column; available: {group_cols}"
        )
    minority = GroupIndicator(d.groups[name])
    rep = fairness_experiment(
        ms.models[0], ms.models[1], d, minority, cfg.params(), cfg.seed
    )
    dataio.write_json(
        out / "fairness.json",
        {
            "schema": "fairness-report-v1",
            "minority_group": name,
            "minority_mass": rep.minority_mass,
            "lemma_threshold": rep.lemma_threshold,
            "lemma_applicable": rep.lemma_applicable,
            "lemma_bound": rep.lemma_bound,
            "bound_satisfied": rep.bound_satisfied,
            "rounds": rep.result.rounds,
        },
    )
    grid = [
        {"model": model, "phase": phase, "group": gname, "restricted_brier": score}
        for (model, phase, gname), score in sorted(rep.restricted.items())
    ]
    dataio.write_csv(
        out / "fairness_grid.csv", grid, ["model", "phase", "group", "restricted_brier"]
    )
    if rep.bound_satisfied is False:
        print("invariant violation: subgroup bound failed", file=sys.stderr)
        return EXIT_INVARIANT, []
    if not rep.result.converged:
        return EXIT_ROUND_CAP, []
    return EXIT_OK, []


def _task_robustness(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    d, ms = _load_pair(cfg)
    ks = cfg.k_range if cfg.k_range is not None else tuple(range(len(ms) + 1))
    baseline = "mode" if d.has_binary_labels else "mean"
    cells = robustness_sweep(ms, d, cfg.params(), ks, cfg.seed, baseline=baseline)
    rows = [vars(c) for c in cells]
    dataio.write_csv(out / "robustness.csv", rows, ["k", "method", "mse", "seed"])
    return EXIT_OK, []


def _task_cate(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    _require(cfg, "causal", "estimators")
    cd = dataio.load_causal(cfg.causal)
    estimators = dataio.load_estimators(cfg.estimators, cfg.estimator_range())
    if len(estimators) < 2:
        raise ParameterError("cate needs at least two estimator columns")
    t1, t2 = estimators[0], estimators[1]
    params = cfg.params()

    if cfg.variant == "reduction":
        pd = build_pseudo_dataset(cd, cfg.weighting)
        res = reconcile_cate(t1, t2, pd, params)
        inc = pd.included
        f1 = t1.as_predictor(inc)
        f2 = t2.as_predictor(inc)
        d_eval = pd.as_dataset()
    elif cfg.variant == "unit":
        res = reconcile_cate_unit_level(t1, t2, cd, params)
        pd = build_pseudo_dataset(cd, "by_cell_size")
        inc = pd.included
        d_eval = pd.as_dataset()
        f1 = t1.as_predictor(inc)
        f2 = t2.as_predictor(inc)
        if not inc.all():
            res = replace(
                res,
                f1_final=Predictor(values=res.f1_final.values[inc], range=t1.range),
                f2_final=Predictor(values=res.f2_final.values[inc], range=t2.range),
                trace=tuple(
                    replace(rec, group=GroupIndicator(rec.group.mask[inc]))
                    for rec in res.trace
                ),
            )
    else:
        raise ParameterError(f"unknown cate variant {cfg.variant!r}")
    return _finish_result(cfg, out, f"cate[{cfg.variant}]", res, f1, f2, d_eval)


def _task_synth(cfg: RunConfig, out: Path) -> tuple[int, list[dict]]:
    f_star, d = gen_ground_truth(cfg.n, cfg.seed)
    spec = PairSpec(n=cfg.n, strategy=cfg.strategy, dis_epsilon=cfg.epsilon, seed=cfg.seed)
    f1, f2 = gen_model_pair(f_star, d, spec)
    dataio.save_labels(d, out / "labels.csv")
    dataio.save_predictions(
        ModelSet(models=(f1, f2), labels=("f1", "f2")), d, out / "predictions.csv"
    )
    cd, tau = gen_synthetic_causal(
        50, 200, effect_prior=lambda r, k: r.uniform(-0.3, 0.3, k), seed=cfg.seed
    )
    e1, e2 = gen_cate_estimator_pair(tau, seed=cfg.seed)
    dataio.save_causal(cd, out / "causal.csv")
    dataio.save_estimators((e1, e2), out / "estimators.csv")
    dataio.write_json(
        out / "synth_manifest.json",
        {
            "schema": "synth-manifest-v1",
            "n": cfg.n,
            "strategy": cfg.strategy,
            "seed": cfg.seed,
            "dis_epsilon": cfg.epsilon,
            "causal": {"n_cells": 50, "units_per_cell": 200},
        },
    )
    return EXIT_OK, []


_TASK_FNS = {
    "reconcile": _task_reconcile,
    "seq": _task_seq,
    "aggregate": _task_aggregate,
    "metrics": _task_metrics,
    "cate": _task_cate,
    "fairness": _task_fairness,
    "robustness": _task_robustness,
    "synth": _task_synth,
}


def run(cfg: RunConfig) -> int:
    """Execute a config: dispatch the task, write artifacts, return exit code."""
    cfg.out.mkdir(parents=True, exist_ok=True)
    if cfg.reps == 1:
        code, rows = _TASK_FNS[cfg.task](cfg, cfg.out)
        if rows:
            dataio.write_csv(cfg.out / "summary.csv", rows, dataio.SUMMARY_COLUMNS)
        return code

    worst = EXIT_OK
    merged: list[dict] = []
    for rep in range(cfg.reps):
        sub = cfg.out / f"rep_{rep}"
        sub.mkdir(parents=True, exist_ok=True)
        rep_cfg = replace(cfg, seed=cfg.seed + rep, reps=1, out=sub)
        code, rows = _TASK_FNS[cfg.task](rep_cfg, sub)
        if rows:
            dataio.write_csv(sub / "summary.csv", rows, dataio.SUMMARY_COLUMNS)
        for row in rows:
            merged.append({**row, "rep": rep})
        worst = max(worst, code)
    if merged:
        dataio.write_csv(cfg.out / "summary.csv", merged, dataio.SUMMARY_COLUMNS + ["rep"])
    return worst


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return tuple(parts)


def _parse_pair(text: str) -> tuple[float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected lo,hi")
    return tuple(parts)


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="reconcile",
        description="Reconcile disagreeing predictive models and analyze model classes.",
    )
    p.add_argument("--task", required=True, choices=TASKS)
    p.add_argument("--alpha", type=float, default=None,
                   help="disagreement mass target (default 0.05; 0.01 for cate)")
    p.add_argument("--epsilon", type=float, default=None,
                   help="pointwise disagreement threshold (default 0.2; 0.04 for cate)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--range", type=_parse_pair, default=None, metavar="LO,HI",
                   help="declared prediction range (default 0,1; -1,1 for cate)")
    p.add_argument("--labels", type=Path, default=None, help="labels CSV")
    p.add_argument("--predictions", type=Path, default=None, help="predictions CSV")
    p.add_argument("--causal", type=Path, default=None, help="causal CSV (id,cell,y,t)")
    p.add_argument("--estimators", type=Path, default=None, help="estimator CSV")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--reps", type=int, default=1,
                   help="repetitions; rep i runs with seed+i into rep_i/")
    p.add_argument("--split", type=_parse_triple, default=None, metavar="TR,VA,TE",
                   help="reconcile on the validation split, evaluate on test")
    p.add_argument("--group", default=None,
                   help="minority group column for the fairness task")
    p.add_argument("--threshold", type=float, default=0.5, help="mode vote threshold")
    p.add_argument("--weighting", choices=("uniform", "by_cell_size"), default="uniform")
    p.add_argument("--variant", choices=("reduction", "unit"), default="reduction",
                   help="cate engine variant")
    p.add_argument("--strategy", default="perturb_regions",
                   help="synth pair generation strategy")
    p.add_argument("--n", type=int, default=1000, help="synth sample count")
    p.add_argument("--k-range", type=_parse_ints, default=None, metavar="K0,K1,...",
                   help="robustness sweep replacement counts")
    p.add_argument("--max-rounds", type=int, default=None,
                   help="hard round cap (default: theoretical bound + 1)")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    is_cate = args.task == "cate"
    return RunConfig(
        task=args.task,
        out=args.out,
        alpha=args.alpha if args.alpha is not None else (0.01 if is_cate else 0.05),
        epsilon=args.epsilon if args.epsilon is not None else (0.04 if is_cate else 0.2),
        seed=args.seed,
        value_range=args.range,
        labels=args.labels,
        predictions=args.predictions,
        causal=args.causal,
        estimators=args.estimators,
        reps=args.reps,
        split=args.split,
        group=args.group,
        threshold=args.threshold,
        weighting=args.weighting,
        variant=args.variant,
        strategy=args.strategy,
        n=args.n,
        k_range=args.k_range,
        max_rounds=args.max_rounds,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        return run(cfg)
    except ReconcileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
