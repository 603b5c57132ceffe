"""File formats, dataset splitting, and serialization.

CSV schemas (all with a header row):

* labels:       ``id,y[,t][,group_<name>...]``
* predictions:  ``id,<model label>[,<model label>...]`` (id-joined to labels)
* causal:       ``id,cell,y,t``
* estimators:   ``cell,<estimator label>[,...]`` (one row per cell, any order)

Floats are written with ``repr`` (shortest round-trip form), so identical
runs produce byte-identical files. Trace JSON stores per-round group
membership as index lists up to 10^4 rows; above that only the defining
predicate (side + epsilon) is kept.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .aggregation import ModelSet, SequentialResult
from .cate import CateEstimatorVector, CausalDataset
from .core import Dataset, Predictor, brier_score, disagreement_region, group_mass
from .engine import ReconcileResult, theoretical_round_bound
from .errors import DataFormatError, ParameterError

__all__ = [
    "load_labels",
    "save_labels",
    "load_predictions",
    "save_predictions",
    "load_causal",
    "save_causal",
    "load_estimators",
    "save_estimators",
    "split_dataset",
    "subset_by_ids",
    "trace_payload",
    "sequential_trace_payload",
    "write_json",
    "write_csv",
    "result_summary_row",
    "verify_theorem",
]

MASK_SIZE_GUARD = 10_000


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DataFormatError(f"{where}: {text!r} is not a number") from None


def _read_rows(path) -> tuple[list[str], list[dict]]:
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file, expected a header row")
        rows = list(reader)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return list(reader.fieldnames), rows


def load_labels(path, binary: bool = False) -> Dataset:
    """Read a labels CSV; group columns are registered under their headers."""
    header, rows = _read_rows(path)
    for col in ("id", "y"):
        if col not in header:
            raise DataFormatError(f"{path}: missing required column {col!r}")
    group_cols = [c for c in header if c.startswith("group_")]
    has_t = "t" in header

    ids, labels, treatment = [], [], []
    groups = {c: [] for c in group_cols}
    for k, row in enumerate(rows, start=2):  # header is line 1
        ids.append(row["id"])
        y = _parse_float(row["y"], f"{path} line {k}, column y")
        if binary and y not in (0.0, 1.0):
            raise DataFormatError(
                f"{path} line {k}: y={row['y']} but binary mode requires 0 or 1"
            )
        labels.append(y)
        if has_t:
            if row["t"] not in ("0", "1"):
                raise DataFormatError(f"{path} line {k}: t must be 0 or 1, got {row['t']!r}")
            treatment.append(row["t"] == "1")
        for c in group_cols:
            if row[c] not in ("0", "1"):
                raise DataFormatError(f"{path} line {k}: {c} must be 0 or 1, got {row[c]!r}")
            groups[c].append(row[c] == "1")

    if len(set(ids)) != len(ids):
        seen = set()
        dup = next(i for i in ids if i in seen or seen.add(i))
        raise DataFormatError(f"{path}: duplicate id {dup!r}")
    try:
        return Dataset(
            labels=np.asarray(labels),
            ids=tuple(ids),
            groups={c: np.asarray(v, dtype=bool) for c, v in groups.items()},
            treatment=np.asarray(treatment, dtype=bool) if has_t else None,
        )
    except ParameterError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_labels(d: Dataset, path) -> None:
    header = ["id", "y"]
    if d.treatment is not None:
        header.append("t")
    header.extend(sorted(d.groups))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(d.n):
            row = [d.ids[i], _fmt(d.labels[i])]
            if d.treatment is not None:
                row.append(_fmt(d.treatment[i]))
            row.extend(_fmt(d.groups[g][i]) for g in sorted(d.groups))
            w.writerow(row)


def load_predictions(path, d: Dataset, value_range=(0.0, 1.0)) -> ModelSet:
    """Read a predictions CSV and align it to the dataset by id join."""
    header, rows = _read_rows(path)
    if "id" not in header:
        raise DataFormatError(f"{path}: missing required column 'id'")
    model_cols = [c for c in header if c != "id"]
    if not model_cols:
        raise DataFormatError(f"{path}: no model columns beside 'id'")

    by_id = {}
    for k, row in enumerate(rows, start=2):
        if row["id"] in by_id:
            raise DataFormatError(f"{path} line {k}: duplicate id {row['id']!r}")
        by_id[row["id"]] = (k, row)
    missing = [i for i in d.ids if i not in by_id]
    extra = [i for i in by_id if i not in set(d.ids)]
    if missing or extra:
        raise DataFormatError(
            f"{path}: id mismatch with labels "
            f"(missing {missing[:3]}{'...' if len(missing) > 3 else ''}, "
            f"unexpected {extra[:3]}{'...' if len(extra) > 3 else ''})"
        )

    lo, hi = float(value_range[0]), float(value_range[1])
    columns = {c: np.empty(d.n) for c in model_cols}
    for pos, sample_id in enumerate(d.ids):
        k, row = by_id[sample_id]
        for c in model_cols:
            v = _parse_float(row[c], f"{path} line {k}, column {c}")
            if v < lo or v > hi:
                raise DataFormatError(
                    f"{path} line {k}: {c}={v} outside declared range [{lo}, {hi}]"
                )
            columns[c][pos] = v
    return ModelSet(
        models=tuple(Predictor(values=columns[c], range=(lo, hi)) for c in model_cols),
        labels=tuple(model_cols),
    )


def save_predictions(ms: ModelSet, d: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *ms.labels])
        for i in range(d.n):
            w.writerow([d.ids[i], *(_fmt(m.values[i]) for m in ms.models)])


def load_causal(path) -> CausalDataset:
    header, rows = _read_rows(path)
    for col in ("id", "cell", "y", "t"):
        if col not in header:
            raise DataFormatError(f"{path}: missing required column {col!r}")
    ids, cells, y, t = [], [], [], []
    for k, row in enumerate(rows, start=2):
        ids.append(row["id"])
        try:
            cells.append(int(row["cell"]))
        except ValueError:
            raise DataFormatError(f"{path} line {k}: cell must be an integer") from None
        yv = _parse_float(row["y"], f"{path} line {k}, column y")
        tv = _parse_float(row["t"], f"{path} line {k}, column t")
        if yv not in (0.0, 1.0) or tv not in (0.0, 1.0):
            raise DataFormatError(f"{path} line {k}: y and t must be 0 or 1")
        y.append(yv)
        t.append(tv == 1.0)
    if len(set(ids)) != len(ids):
        raise DataFormatError(f"{path}: duplicate unit ids")
    try:
        return CausalDataset(cells=np.asarray(cells), y=np.asarray(y),
                             t=np.asarray(t), ids=tuple(ids))
    except ParameterError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def save_causal(cd: CausalDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cell", "y", "t"])
        for i in range(cd.n):
            w.writerow([cd.ids[i], cd.cells[i], int(cd.y[i]), int(cd.t[i])])


def load_estimators(path, value_range=(-1.0, 1.0)) -> tuple[CateEstimatorVector, ...]:
    """Read an estimator CSV; rows may arrive in any cell order."""
    header, rows = _read_rows(path)
    if "cell" not in header:
        raise DataFormatError(f"{path}: missing required column 'cell'")
    est_cols = [c for c in header if c != "cell"]
    if not est_cols:
        raise DataFormatError(f"{path}: no estimator columns beside 'cell'")
    seen = {}
    for k, row in enumerate(rows, start=2):
        try:
            c = int(row["cell"])
        except ValueError:
            raise DataFormatError(f"{path} line {k}: cell must be an integer") from None
        if c in seen:
            raise DataFormatError(f"{path} line {k}: duplicate cell {c}")
        seen[c] = (k, row)
    n_cells = max(seen) + 1
    if sorted(seen) != list(range(n_cells)):
        raise DataFormatError(f"{path}: cell ids must cover 0..{n_cells - 1} exactly")

    lo, hi = float(value_range[0]), float(value_range[1])
    out = []
    for name in est_cols:
        values = np.empty(n_cells)
        for c in range(n_cells):
            k, row = seen[c]
            v = _parse_float(row[name], f"{path} line {k}, column {name}")
            if v < lo or v > hi:
                raise DataFormatError(
                    f"{path} line {k}: {name}={v} outside declared range [{lo}, {hi}]"
                )
            values[c] = v
        out.append(CateEstimatorVector(values=values, range=(lo, hi), label=name))
    return tuple(out)


def save_estimators(estimators, path) -> None:
    estimators = tuple(estimators)
    n_cells = estimators[0].n_cells
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell", *(e.label or f"estimator_{k}" for k, e in enumerate(estimators))])
        for c in range(n_cells):
            w.writerow([c, *(_fmt(e.values[c]) for e in estimators)])


def split_dataset(d: Dataset, fractions, seed: int):
    """Seeded disjoint (train, validation, test) id partition.

    Sizes are floors of fraction * n; leftover rows go to the splits with
    the largest fractional remainders (earlier split wins ties).
    """
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ParameterError("need three non-negative fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ParameterError(f"fractions must sum to 1, got {sum(fractions)}")
    raw = [f * d.n for f in fractions]
    sizes = [int(x) for x in raw]
    remainders = sorted(range(3), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in range(d.n - sum(sizes)):
        sizes[remainders[i % 3]] += 1
    order = np.random.default_rng(seed).permutation(d.n)
    out, start = [], 0
    for size in sizes:
        out.append(tuple(d.ids[i] for i in order[start : start + size]))
        start += size
    return tuple(out)


def subset_by_ids(d: Dataset, ids) -> tuple[Dataset, np.ndarray]:
    """Rows for the given ids, in the given order; also the row indices used."""
    pos = {sample_id: i for i, sample_id in enumerate(d.ids)}
    try:
        idx = np.asarray([pos[i] for i in ids], dtype=int)
    except KeyError as exc:
        raise ParameterError(f"unknown id {exc.args[0]!r}") from None
    return (
        Dataset(
            labels=d.labels[idx],
            ids=tuple(d.ids[i] for i in idx),
            groups={name: mask[idx] for name, mask in d.groups.items()},
            treatment=None if d.treatment is None else d.treatment[idx],
            weights=None if d.weights is None else d.weights[idx],
        ),
        idx,
    )


def trace_payload(res: ReconcileResult, seed: int | None = None) -> dict:
    """A JSON-ready view of one run, sufficient to re-verify every bound."""
    n = res.f1_final.n
    rounds = []
    for rec in res.trace:
        entry = {
            "t": rec.t,
            "patched_model": rec.patched_model,
            "direction": rec.direction,
            "group_mass": rec.group_mass,
            "delta_raw": rec.delta_raw,
            "delta": rec.delta,
            "brier_before": rec.brier_before,
            "brier_after": rec.brier_after,
            "disagreement_mass_before": rec.disagreement_mass_before,
        }
        if n <= MASK_SIZE_GUARD:
            entry["group_indices"] = [int(i) for i in rec.group.indices()]
        else:
            entry["group_predicate"] = {
                "round": rec.t,
                "direction": rec.direction,
                "epsilon": res.params.epsilon,
            }
        rounds.append(entry)
    payload = {
        "schema": "reconcile-trace-v1",
        "n": n,
        "alpha": res.params.alpha,
        "epsilon": res.params.epsilon,
        "m": res.params.m,
        "max_rounds": res.params.max_rounds,
        "t1": res.t1,
        "t2": res.t2,
        "terminated_by": res.terminated_by,
        "rounds": rounds,
    }
    if seed is not None:
        payload["seed"] = seed
    return payload


def sequential_trace_payload(seq: SequentialResult, seed: int | None = None) -> dict:
    return {
        "schema": "reconcile-seq-trace-v1",
        "terminated_by": seq.terminated_by,
        "survivor_label": seq.survivor_label,
        "stages": [
            {
                "index": s.index,
                "left": s.left_label,
                "right": s.right_label,
                "survivor_output": s.survivor_output,
                "trace": trace_payload(s.result, seed=seed),
            }
            for s in seq.stages
        ],
    }


def write_json(path, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


SUMMARY_COLUMNS = [
    "task", "n", "alpha", "epsilon", "m", "seed", "rounds", "t1", "t2",
    "terminated_by", "brier1_before", "brier1_after", "brier2_before",
    "brier2_after", "bound_rounds", "margin_rounds", "bound_brier1",
    "margin_brier1", "bound_brier2", "margin_brier2",
    "disagreement_before", "disagreement_after", "lemma_gap_bound", "lemma_gap",
]


def result_summary_row(
    task: str, res: ReconcileResult, f1: Predictor, f2: Predictor, d: Dataset, seed: int
) -> dict:
    """One summary row carrying everything needed to re-check the guarantees."""
    a, e = res.params.alpha, res.params.epsilon
    b1, b2 = brier_score(f1, d), brier_score(f2, d)
    b1f, b2f = brier_score(res.f1_final, d), brier_score(res.f2_final, d)
    step = a * e * e / 16.0
    bound_rounds = theoretical_round_bound(f1, f2, d, a, e)
    before_mass = group_mass(disagreement_region(f1, f2, e).u, d)
    after_mass = res.final_disagreement_mass(d)
    return {
        "task": task,
        "n": d.n,
        "alpha": a,
        "epsilon": e,
        "m": res.params.m,
        "seed": seed,
        "rounds": res.rounds,
        "t1": res.t1,
        "t2": res.t2,
        "terminated_by": res.terminated_by,
        "brier1_before": b1,
        "brier1_after": b1f,
        "brier2_before": b2,
        "brier2_after": b2f,
        "bound_rounds": bound_rounds,
        "margin_rounds": bound_rounds - res.rounds,
        "bound_brier1": b1 - res.t1 * step,
        "margin_brier1": (b1 - res.t1 * step) - b1f,
        "bound_brier2": b2 - res.t2 * step,
        "margin_brier2": (b2 - res.t2 * step) - b2f,
        "disagreement_before": before_mass,
        "disagreement_after": after_mass,
        "lemma_gap_bound": 4 * e + 3 * a,
        "lemma_gap": abs(b1f - b2f),
    }


def verify_theorem(
    res: ReconcileResult, f1: Predictor, f2: Predictor, d: Dataset, tol: float = 1e-9
) -> list[str]:
    """Re-check the three run guarantees; returns human-readable violations."""
    a, e = res.params.alpha, res.params.epsilon
    problems = []
    bound_rounds = theoretical_round_bound(f1, f2, d, a, e)
    if res.rounds > bound_rounds + tol:
        problems.append(f"rounds {res.rounds} exceed bound {bound_rounds}")
    step = a * e * e / 16.0
    for idx, (initial, final, t) in enumerate(
        [(f1, res.f1_final, res.t1), (f2, res.f2_final, res.t2)], start=1
    ):
        limit = brier_score(initial, d) - t * step
        if brier_score(final, d) > limit + tol:
            problems.append(
                f"model {idx} final brier {brier_score(final, d)} above {limit}"
            )
    if res.converged and res.final_disagreement_mass(d) >= a:
        problems.append(
            f"converged but final disagreement mass {res.final_disagreement_mass(d)} >= {a}"
        )
    for rec in res.trace:
        if rec.brier_before - rec.brier_after < step - tol:
            problems.append(f"round {rec.t} improved by less than {step}")
        if abs(rec.delta_raw - rec.delta) > 1.0 / (2 * res.params.m):
            problems.append(f"round {rec.t} rounding residual exceeds 1/(2m)")
    return problems
