import json
from pathlib import Path

import numpy as np
import pytest

from reconcile import cli, dataio
from reconcile.aggregation import ModelSet
from reconcile.cate import CateEstimatorVector
from reconcile.core import Dataset, Predictor
from reconcile.engine import ReconcileParams, reconcile
from reconcile.errors import DataFormatError, ParameterError
from reconcile.synth import gen_synthetic_causal


def write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


class TestLoadLabels:
    def test_minimal_file(self, tmp_path):
        p = write(tmp_path / "l.csv", "id,y\na,1\nb,0\n")
        d = dataio.load_labels(p)
        assert d.n == 2 and list(d.labels) == [1.0, 0.0]
        assert d.ids == ("a", "b")

    def test_binary_mode_names_row(self, tmp_path):
        p = write(tmp_path / "l.csv", "id,y\na,1\nb,0.7\n")
        with pytest.raises(DataFormatError, match="line 3"):
            dataio.load_labels(p, binary=True)

    def test_duplicate_ids(self, tmp_path):
        p = write(tmp_path / "l.csv", "id,y\na,1\na,0\n")
        with pytest.raises(DataFormatError, match="duplicate id"):
            dataio.load_labels(p)

    def test_missing_column(self, tmp_path):
        p = write(tmp_path / "l.csv", "id,label\na,1\n")
        with pytest.raises(DataFormatError, match="missing required column 'y'"):
            dataio.load_labels(p)

    def test_groups_and_treatment(self, tmp_path):
        p = write(
            tmp_path / "l.csv",
            "id,y,t,group_min\na,1,0,1\nb,0,1,0\n",
        )
        d = dataio.load_labels(p)
        assert list(d.treatment) == [False, True]
        assert list(d.groups["group_min"]) == [True, False]

    def test_round_trip_identity(self, tmp_path):
        rng = np.random.default_rng(0)
        d = Dataset(
            labels=rng.uniform(0, 1, 20),
            ids=tuple(f"s{i}" for i in range(20)),
            groups={"group_a": rng.integers(0, 2, 20).astype(bool)},
            treatment=rng.integers(0, 2, 20).astype(bool),
        )
        path = tmp_path / "rt.csv"
        dataio.save_labels(d, path)
        back = dataio.load_labels(path)
        assert back.ids == d.ids
        assert np.array_equal(back.labels, d.labels)
        assert np.array_equal(back.groups["group_a"], d.groups["group_a"])
        assert np.array_equal(back.treatment, d.treatment)


class TestLoadPredictions:
    def setup_method(self):
        self.d = Dataset(labels=np.asarray([1.0, 0.0]), ids=("a", "b"))

    def test_single_column(self, tmp_path):
        p = write(tmp_path / "p.csv", "id,m\na,0.9\nb,0.1\n")
        ms = dataio.load_predictions(p, self.d)
        assert len(ms) == 1 and ms.labels == ("m",)

    def test_shuffled_rows_align_by_id(self, tmp_path):
        p = write(tmp_path / "p.csv", "id,m\nb,0.1\na,0.9\n")
        ms = dataio.load_predictions(p, self.d)
        assert list(ms.models[0].values) == [0.9, 0.1]

    def test_out_of_range_value(self, tmp_path):
        p = write(tmp_path / "p.csv", "id,m\na,1.2\nb,0.1\n")
        with pytest.raises(DataFormatError, match="outside declared range"):
            dataio.load_predictions(p, self.d)

    def test_id_mismatch(self, tmp_path):
        p = write(tmp_path / "p.csv", "id,m\na,0.9\nc,0.1\n")
        with pytest.raises(DataFormatError, match="id mismatch"):
            dataio.load_predictions(p, self.d)

    def test_round_trip(self, tmp_path):
        ms = ModelSet(
            models=(Predictor(values=[0.25, 0.75]), Predictor(values=[1.0, 0.0])),
            labels=("u", "v"),
        )
        path = tmp_path / "rt.csv"
        dataio.save_predictions(ms, self.d, path)
        back = dataio.load_predictions(path, self.d)
        assert back.labels == ("u", "v")
        for a, b in zip(back.models, ms.models):
            assert np.array_equal(a.values, b.values)


class TestCausalIO:
    def test_round_trip(self, tmp_path):
        cd, _ = gen_synthetic_causal(5, 10, effect_prior=0.2, seed=1)
        path = tmp_path / "c.csv"
        dataio.save_causal(cd, path)
        back = dataio.load_causal(path)
        assert np.array_equal(back.cells, cd.cells)
        assert np.array_equal(back.y, cd.y)
        assert np.array_equal(back.t, cd.t)

    def test_estimator_round_trip_any_order(self, tmp_path):
        path = write(tmp_path / "e.csv", "cell,a,b\n1,0.5,-0.5\n0,0.25,0.75\n")
        t1, t2 = dataio.load_estimators(path)
        assert list(t1.values) == [0.25, 0.5]
        assert list(t2.values) == [0.75, -0.5]
        out = tmp_path / "e2.csv"
        dataio.save_estimators((t1, t2), out)
        r1, r2 = dataio.load_estimators(out)
        assert np.array_equal(r1.values, t1.values)

    def test_estimator_gap_in_cells(self, tmp_path):
        path = write(tmp_path / "e.csv", "cell,a\n0,0.5\n2,0.5\n")
        with pytest.raises(DataFormatError, match="cover 0..2"):
            dataio.load_estimators(path)


class TestSplit:
    def test_all_train(self):
        d = Dataset(labels=np.zeros(10))
        tr, va, te = dataio.split_dataset(d, (1, 0, 0), seed=0)
        assert len(tr) == 10 and not va and not te

    def test_default_sizes(self):
        d = Dataset(labels=np.zeros(10))
        tr, va, te = dataio.split_dataset(d, (0.6, 0.2, 0.2), seed=1)
        assert (len(tr), len(va), len(te)) == (6, 2, 2)
        assert set(tr) | set(va) | set(te) == set(d.ids)

    def test_seeded_reproducibility(self):
        d = Dataset(labels=np.zeros(100))
        assert dataio.split_dataset(d, (0.6, 0.2, 0.2), 7) == dataio.split_dataset(
            d, (0.6, 0.2, 0.2), 7
        )

    def test_bad_fractions(self):
        d = Dataset(labels=np.zeros(4))
        with pytest.raises(ParameterError):
            dataio.split_dataset(d, (0.5, 0.2, 0.2), seed=0)


class TestTracePayload:
    def test_dense_rounds_and_counts(self):
        d = Dataset(labels=np.asarray([1.0, 1.0, 0.0, 0.0]))
        res = reconcile(
            Predictor(values=[0.9, 0.9, 0.1, 0.1]),
            Predictor(values=[0.1, 0.1, 0.1, 0.1]),
            d,
            ReconcileParams(alpha=0.1, epsilon=0.2),
        )
        payload = dataio.trace_payload(res, seed=0)
        assert [r["t"] for r in payload["rounds"]] == list(range(res.rounds))
        assert payload["t1"] + payload["t2"] == res.rounds
        assert payload["rounds"][0]["group_indices"] == [0, 1]


def run_cli(*argv) -> int:
    return cli.main([str(a) for a in argv])


@pytest.fixture
def four_point(tmp_path):
    labels = write(tmp_path / "labels.csv", "id,y\na,1\nb,1\nc,0\nd,0\n")
    preds = write(
        tmp_path / "preds.csv",
        "id,f1,f2\na,0.9,0.1\nb,0.9,0.1\nc,0.1,0.1\nd,0.1,0.1\n",
    )
    return labels, preds


class TestCli:
    def test_reconcile_four_point_trace(self, four_point, tmp_path):
        labels, preds = four_point
        out = tmp_path / "out"
        code = run_cli(
            "--task", "reconcile", "--labels", labels, "--predictions", preds,
            "--alpha", "0.1", "--epsilon", "0.2", "--out", out,
        )
        assert code == 0
        trace = json.loads((out / "trace.json").read_text())
        assert len(trace["rounds"]) == 1
        assert trace["rounds"][0]["delta"] == 29 / 32
        assert trace["rounds"][0]["patched_model"] == 2
        summary = (out / "summary.csv").read_text().splitlines()
        assert len(summary) == 2  # header + one row
        assert (out / "ma_audit.json").exists()

    def test_metrics_single_model(self, tmp_path):
        labels = write(tmp_path / "labels.csv", "id,y\na,1\nb,0\n")
        preds = write(tmp_path / "p.csv", "id,m\na,0.9\nb,0.2\n")
        out = tmp_path / "out"
        code = run_cli(
            "--task", "metrics", "--labels", labels, "--predictions", preds, "--out", out
        )
        assert code == 0
        rep = json.loads((out / "multiplicity.json").read_text())
        assert rep["ambiguity"] == 0.0
        assert rep["discrepancy"] is None
        assert (out / "pair_masses.csv").read_text().strip() == "model_i,model_j,mass"

    def test_seq_five_models_four_stages(self, tmp_path):
        rng = np.random.default_rng(2)
        n = 120
        labels_rows = "".join(f"r{i},{rng.integers(0, 2)}\n" for i in range(n))
        labels = write(tmp_path / "labels.csv", "id,y\n" + labels_rows)
        cols = ",".join(f"m{j}" for j in range(5))
        pred_rows = "".join(
            f"r{i}," + ",".join(repr(float(v)) for v in rng.uniform(0, 1, 5)) + "\n"
            for i in range(n)
        )
        preds = write(tmp_path / "p.csv", f"id,{cols}\n" + pred_rows)
        out = tmp_path / "out"
        code = run_cli(
            "--task", "seq", "--labels", labels, "--predictions", preds, "--out", out
        )
        assert code == 0
        trace = json.loads((out / "trace.json").read_text())
        assert len(trace["stages"]) == 4
        summary = (out / "summary.csv").read_text().splitlines()
        assert len(summary) == 5  # header + 4 stage rows

    def test_synth_then_full_pipeline(self, tmp_path):
        synth_dir = tmp_path / "synth"
        assert run_cli("--task", "synth", "--n", "400", "--seed", "3", "--out", synth_dir) == 0
        for name in ("labels.csv", "predictions.csv", "causal.csv", "estimators.csv"):
            assert (synth_dir / name).exists()
        rec_dir = tmp_path / "rec"
        code = run_cli(
            "--task", "reconcile",
            "--labels", synth_dir / "labels.csv",
            "--predictions", synth_dir / "predictions.csv",
            "--out", rec_dir,
        )
        assert code == 0
        cate_dir = tmp_path / "cate"
        code = run_cli(
            "--task", "cate",
            "--causal", synth_dir / "causal.csv",
            "--estimators", synth_dir / "estimators.csv",
            "--out", cate_dir,
        )
        assert code == 0
        assert (cate_dir / "trace.json").exists()

    def test_cate_unit_variant(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "200", "--seed", "4", "--out", synth_dir)
        out = tmp_path / "unit"
        code = run_cli(
            "--task", "cate", "--variant", "unit",
            "--causal", synth_dir / "causal.csv",
            "--estimators", synth_dir / "estimators.csv",
            "--out", out,
        )
        assert code == 0

    def test_split_mode_writes_val_and_test_rows(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "500", "--seed", "5", "--out", synth_dir)
        out = tmp_path / "split"
        code = run_cli(
            "--task", "reconcile",
            "--labels", synth_dir / "labels.csv",
            "--predictions", synth_dir / "predictions.csv",
            "--split", "0.6,0.2,0.2",
            "--out", out,
        )
        assert code == 0
        rows = (out / "summary.csv").read_text().splitlines()
        assert len(rows) == 3
        assert "reconcile[val]" in rows[1] and "reconcile[test]" in rows[2]

    def test_missing_input_exits_2(self, tmp_path):
        code = run_cli(
            "--task", "reconcile", "--labels", tmp_path / "nope.csv",
            "--predictions", tmp_path / "nope2.csv", "--out", tmp_path / "o",
        )
        assert code == 2

    def test_round_cap_exits_3(self, four_point, tmp_path):
        labels, preds = four_point
        code = run_cli(
            "--task", "reconcile", "--labels", labels, "--predictions", preds,
            "--alpha", "0.1", "--epsilon", "0.2", "--max-rounds", "0",
            "--out", tmp_path / "o",
        )
        assert code == 3

    def test_fairness_task(self, tmp_path):
        rng = np.random.default_rng(9)
        n = 400
        rows = []
        for i in range(n):
            y = int(rng.integers(0, 2))
            minority = 1 if i < 100 else 0
            rows.append(f"r{i},{y},{minority}")
        labels = write(tmp_path / "labels.csv", "id,y,group_min\n" + "\n".join(rows) + "\n")
        z = np.minimum(np.abs(rng.normal(0, 0.1, n)), 1.0)
        f1_rows = []
        for i, line in enumerate(rows):
            y = float(line.split(",")[1])
            v = float(1.0 - z[i] if y == 1.0 else z[i])
            f1_rows.append(f"r{i},{v!r},{v!r}")
        preds = write(tmp_path / "p.csv", "id,f1,f2\n" + "\n".join(f1_rows) + "\n")
        out = tmp_path / "fair"
        code = run_cli(
            "--task", "fairness", "--labels", labels, "--predictions", preds,
            "--alpha", "0.001", "--epsilon", "0.01", "--out", out,
        )
        assert code == 0
        grid = (out / "fairness_grid.csv").read_text().splitlines()
        assert len(grid) == 9  # header + 2 models x 2 phases x 2 groups

    def test_robustness_task(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "300", "--seed", "6", "--out", synth_dir)
        out = tmp_path / "rob"
        code = run_cli(
            "--task", "robustness",
            "--labels", synth_dir / "labels.csv",
            "--predictions", synth_dir / "predictions.csv",
            "--k-range", "0,1,2",
            "--out", out,
        )
        assert code == 0
        lines = (out / "robustness.csv").read_text().splitlines()
        assert len(lines) == 7  # header + 3 ks x 2 methods

    def test_aggregate_task(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "300", "--seed", "7", "--out", synth_dir)
        out = tmp_path / "agg"
        code = run_cli(
            "--task", "aggregate",
            "--labels", synth_dir / "labels.csv",
            "--predictions", synth_dir / "predictions.csv",
            "--out", out,
        )
        assert code == 0
        lines = (out / "aggregate_scores.csv").read_text().splitlines()
        assert len(lines) == 6  # header + 5 methods

    def test_byte_identical_reruns(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "400", "--seed", "8", "--out", synth_dir)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = run_cli(
                "--task", "reconcile",
                "--labels", synth_dir / "labels.csv",
                "--predictions", synth_dir / "predictions.csv",
                "--seed", "11",
                "--out", out,
            )
            assert code == 0
            outs.append(out)
        for fname in ("trace.json", "summary.csv", "ma_audit.json"):
            assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()

    def test_reps_produce_subdirs_and_merged_summary(self, tmp_path):
        synth_dir = tmp_path / "synth"
        run_cli("--task", "synth", "--n", "300", "--seed", "9", "--out", synth_dir)
        out = tmp_path / "reps"
        code = run_cli(
            "--task", "reconcile",
            "--labels", synth_dir / "labels.csv",
            "--predictions", synth_dir / "predictions.csv",
            "--reps", "3",
            "--out", out,
        )
        assert code == 0
        assert (out / "rep_0" / "trace.json").exists()
        merged = (out / "summary.csv").read_text().splitlines()
        assert len(merged) == 4  # header + 3 reps
