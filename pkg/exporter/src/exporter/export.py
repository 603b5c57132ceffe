"""Export orchestration: train, screen, and write the reconcile CSV schemas.

The exporter is a one-way producer: it writes files in the downstream
package's documented formats (labels ``id,y[,t][,group_*]``, predictions
``id,<model>...``, causal ``id,cell,y,t``, estimators ``cell,<name>...``)
but never imports its code. Every preprocessing and modeling choice is
recorded in a JSON manifest next to the data.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .metalearners import (
    META_LEARNERS,
    EstimatorUnavailable,
    cell_means,
    tree_subgroups,
)
from .sources import CausalSource, TabularSource
from .zoo import DEFAULT_BAND, predict_scores, screen_zoo, zoo_for

SPLITS = ("train", "val", "test")


@dataclass
class ExportManifest:
    dataset: str
    task: str
    seed: int
    n: int
    split_sizes: dict
    models: list  # {label, summary, cv_score, passed} or estimator status
    meta_rule_band: list | None
    group_majority: str | None
    group_minority: str | None
    files: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(x) -> str:
    return repr(float(x))


def _split_indices(n: int, seed: int, fractions=(0.6, 0.2, 0.2)):
    raw = [f * n for f in fractions]
    sizes = [int(x) for x in raw]
    order_keys = sorted(range(3), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in range(n - sum(sizes)):
        sizes[order_keys[i % 3]] += 1
    perm = np.random.default_rng(seed).permutation(n)
    out, start = {}, 0
    for name, size in zip(SPLITS, sizes):
        out[name] = np.sort(perm[start : start + size])
        start += size
    return out


def _write_labels(path, ids, y, groups: dict[str, np.ndarray]) -> None:
    names = sorted(groups)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "y", *names])
        for k, i in enumerate(ids):
            w.writerow([i, _fmt(y[k]), *("1" if groups[g][k] else "0" for g in names)])


def _write_predictions(path, ids, columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", *names])
        for k, i in enumerate(ids):
            w.writerow([i, *(_fmt(columns[c][k]) for c in names)])


def export_predictions(
    source: TabularSource,
    seed: int,
    out_dir,
    band: tuple[float, float] = DEFAULT_BAND,
) -> ExportManifest:
    """Split 60/20/20, train the zoo, screen it, and export per split.

    Prediction files carry only the screen-passing models; if fewer than
    two pass, the shortfall is recorded in the manifest (never padded with
    failing models).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X = source.features.to_numpy(dtype=float)
    y = source.target.astype(float)
    ids = np.array([f"{source.name}_{i}" for i in range(source.n)])
    splits = _split_indices(source.n, seed)

    counts = {}
    for value in source.demographic:
        counts[value] = counts.get(value, 0) + 1
    ranked = sorted(counts, key=lambda v: (-counts[v], str(v)))
    majority = ranked[0]
    minority = ranked[1] if len(ranked) > 1 else None
    groups = {"group_majority": source.demographic == majority}
    if minority is not None:
        groups["group_minority"] = source.demographic == minority

    entries = zoo_for(source.task)
    tr = splits["train"]
    screen = screen_zoo(entries, X[tr], y[tr], source.task, band=band)
    passing = [s.label for s in screen if s.passed]

    fitted = {}
    for entry in entries:
        if entry.label in passing:
            fitted[entry.label] = entry.factory().fit(X[tr], y[tr])

    manifest = ExportManifest(
        dataset=source.name,
        task=source.task,
        seed=seed,
        n=source.n,
        split_sizes={k: int(v.size) for k, v in splits.items()},
        meta_rule_band=[band[0], band[1]],
        models=[
            {
                "label": e.label,
                "summary": e.summary,
                "cv_score": s.cv_score,
                "passed": s.passed,
            }
            for e, s in zip(entries, screen)
        ],
        group_majority=str(majority),
        group_minority=None if minority is None else str(minority),
        notes=list(source.notes),
    )
    if source.task == "classification":
        manifest.notes.append(
            "classification scores are class-1 probabilities; margin-only "
            "models use a logistic squash of the decision function"
        )
    if len(passing) < 2:
        manifest.notes.append(
            f"meta-rule passed only {len(passing)} model(s); "
            "a reconciliation pair cannot be formed from this export"
        )

    for name in SPLITS:
        idx = splits[name]
        labels_path = out / f"labels_{name}.csv"
        _write_labels(labels_path, ids[idx], y[idx], {g: m[idx] for g, m in groups.items()})
        manifest.files[f"labels_{name}"] = str(labels_path)
        if passing:
            columns = {
                label: predict_scores(model, X[idx], source.task)
                for label, model in fitted.items()
            }
            pred_path = out / f"predictions_{name}.csv"
            _write_predictions(pred_path, ids[idx], columns)
            manifest.files[f"predictions_{name}"] = str(pred_path)
    manifest.save(out / "manifest.json")
    manifest.files["manifest"] = str(out / "manifest.json")
    return manifest


def export_cate_estimates(
    source: CausalSource,
    seed: int,
    out_dir,
    max_leaf_nodes: int = 100,
    min_samples_leaf: int = 20,
) -> ExportManifest:
    """Subgroup by a transformed-outcome tree, fit meta-learners, export.

    Per-estimator failures (e.g. an optional backing package missing) are
    recorded in the manifest, not papered over.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X = source.features.to_numpy(dtype=float)
    y = source.outcome.astype(float)
    t = source.treatment.astype(float)

    sub = tree_subgroups(
        X, y, t, max_leaf_nodes=max_leaf_nodes, seed=seed,
        min_samples_leaf=min_samples_leaf,
    )
    estimator_cols: dict[str, np.ndarray] = {}
    statuses = []
    for name, fn in META_LEARNERS.items():
        try:
            unit_tau = fn(X, y, t, seed)
            per_cell = np.clip(cell_means(unit_tau, sub.cells, sub.n_cells), -1.0, 1.0)
            estimator_cols[name] = per_cell
            statuses.append({"label": name, "status": "ok"})
        except EstimatorUnavailable as exc:
            statuses.append({"label": name, "status": f"unavailable: {exc}"})
        except Exception as exc:  # training failure: report, keep going
            statuses.append({"label": name, "status": f"failed: {exc}"})

    causal_path = out / "causal.csv"
    with open(causal_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "cell", "y", "t"])
        for i in range(source.n):
            w.writerow([f"{source.name}_{i}", sub.cells[i], int(y[i]), int(t[i])])

    manifest = ExportManifest(
        dataset=source.name,
        task="causal",
        seed=seed,
        n=source.n,
        split_sizes={"all": source.n},
        meta_rule_band=None,
        models=statuses,
        group_majority=None,
        group_minority=None,
        notes=list(source.notes)
        + [
            f"subgroups: {sub.n_cells} leaves of a transformed-outcome tree "
            f"(max_leaf_nodes={max_leaf_nodes}, min_samples_leaf={min_samples_leaf})",
            "estimator values are per-cell means of unit-level effects, clipped to [-1, 1]",
            "x-learner blends arms with a constant 0.5 propensity (randomized trial)",
        ],
        files={"causal": str(causal_path)},
    )
    if estimator_cols:
        est_path = out / "estimators.csv"
        with open(est_path, "w", newline="") as fh:
            w = csv.writer(fh)
            names = list(estimator_cols)
            w.writerow(["cell", *names])
            for c in range(sub.n_cells):
                w.writerow([c, *(_fmt(estimator_cols[n][c]) for n in names)])
        manifest.files["estimators"] = str(est_path)
    manifest.save(out / "manifest.json")
    manifest.files["manifest"] = str(out / "manifest.json")
    return manifest
