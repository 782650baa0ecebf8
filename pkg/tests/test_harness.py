import csv
import json

import numpy as np
import pytest

from clsp import GeneratorConfig, Provenance
from clsp.harness import (
    DatasetError,
    DatasetRecord,
    aggregate,
    attention_matrices,
    build_dataset,
    evaluate_model,
    export_attention,
    format_report,
    label_instance,
    load_dataset,
    metrics_to_dict,
    oracle_predictor,
    read_rows_csv,
    split_of,
    timing_path,
    write_dataset,
)
from clsp.pipeline import RepairOptions

from conftest import SMALL_MODEL, make_i1

CONFIGS = [GeneratorConfig(T=6, c=c, f=f, seed=5) for c in (3, 5, 8) for f in (1000, 10000)]


@pytest.fixture(scope="module")
def small_records():
    return build_dataset(CONFIGS, 12, "bnb")


class TestDataset:
    def test_hundred_records_revalidate(self, tmp_path):
        path = tmp_path / "ds.jsonl"
        recs = build_dataset(GeneratorConfig(T=10, c=3, f=1000, seed=1), 100, "bnb", path)
        assert len(recs) == 100
        loaded = load_dataset(path)
        assert len(loaded) == 100
        assert all(r.solve_time is not None for r in loaded)
        for a, b in zip(recs, loaded):
            assert a.objective == b.objective and a.setup.tolist() == b.setup.tolist()
            assert b.status == "Optimal" and b.solver == Provenance.BRANCH_AND_BOUND.value

    def test_injected_i1(self, tmp_path):
        rec = label_instance(make_i1(), "brute_force")
        assert rec.setup.tolist() == [1, 0] and rec.objective == 30
        path = tmp_path / "i1.jsonl"
        write_dataset([rec], path)
        (back,) = load_dataset(path)
        assert back.setup.tolist() == [1, 0] and back.objective == 30

    def test_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        build_dataset(CONFIGS[:2], 20, "bnb", a)
        build_dataset(CONFIGS[:2], 20, "bnb", b)
        assert a.read_bytes() == b.read_bytes()

    def test_solvers_agree(self):
        cfg = GeneratorConfig(T=8, c=5, f=10000, seed=2)
        objs = {s: [r.objective for r in build_dataset(cfg, 10, s)] for s in ("brute_force", "bnb", "dp")}
        assert objs["brute_force"] == objs["bnb"] == objs["dp"]

    def test_parallel_build_matches_serial(self):
        serial = build_dataset(CONFIGS[:2], 8, "bnb")
        parallel = build_dataset(CONFIGS[:2], 8, "bnb", workers=2)
        assert [r.to_json() for r in serial] == [r.to_json() for r in parallel]

    def test_rejects_tampered_objective(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = label_instance(make_i1(), "bnb")
        obj = json.loads(rec.to_json())
        obj["objective"] += 1
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(DatasetError):
            load_dataset(path)

    def test_rejects_infeasible_plan(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        obj = json.loads(label_instance(make_i1(), "bnb").to_json())
        obj["x"] = [4, 4]
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(DatasetError):
            load_dataset(path)

    def test_split_proportions(self):
        counts = {"train": 0, "valid": 0, "test": 0}
        for seed in range(20_000):
            counts[split_of(seed)] += 1
        assert abs(counts["train"] / 20_000 - 0.8) < 0.01
        assert abs(counts["valid"] / 20_000 - 0.1) < 0.01
        assert split_of(123) == split_of(123)

    def test_split_filter(self, tmp_path, small_records):
        path = tmp_path / "ds.jsonl"
        write_dataset(small_records, path)
        parts = [load_dataset(path, split=s) for s in ("train", "valid", "test")]
        assert sum(len(p) for p in parts) == len(small_records)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            build_dataset(CONFIGS[0], 0)
        with pytest.raises(ValueError):
            build_dataset(CONFIGS[0], 1, "simplex")
        with pytest.raises(ValueError):
            build_dataset(GeneratorConfig(T=30), 1, "brute_force")

    def test_timing_sidecar(self, tmp_path, small_records):
        path = tmp_path / "ds.jsonl"
        write_dataset(small_records, path)
        lines = open(timing_path(path)).read().splitlines()
        assert len(lines) == len(small_records)
        assert "solve_time" not in path.read_text()


class TestEvaluate:
    def test_oracle_stub_is_perfect(self, small_records):
        metrics, rows, _ = evaluate_model(oracle_predictor(small_records), small_records)
        assert len(metrics) == 7
        for m in metrics.values():
            assert m.optgap_pct == 0.0 and m.inf_pct == 0.0
        assert all(r["matches_label"] for r in rows)
        assert metrics["overall"].provenance == {"MLDirect": len(small_records)}

    def test_flipped_stub_without_fallback(self, small_records):
        metrics, _, _ = evaluate_model(
            oracle_predictor(small_records, flip_last=True), small_records, RepairOptions(fallback_exact=False)
        )
        for m in metrics.values():
            assert m.inf_pct == 0.0 and m.optgap_pct >= 0.0

    def test_all_zero_stub(self, small_records):
        stub = lambda inst: np.zeros(inst.T, dtype=int)
        opts = RepairOptions(flip_last=False, fallback_exact=False)
        metrics, _, _ = evaluate_model(stub, small_records, opts)
        for m in metrics.values():
            assert m.inf_pct == 100.0 and m.pre_repair_inf_pct == 100.0
            assert m.optgap_pct is None

    def test_optgap_zero_when_prediction_matches(self, small_records):
        rng = np.random.default_rng(0)
        table = {r.instance.to_json(): r.setup for r in small_records}

        def noisy(inst):
            y = table[inst.to_json()].copy()
            if rng.random() < 0.5:
                y[0] ^= 1
            return y

        _, rows, _ = evaluate_model(noisy, small_records)
        matched = [r for r in rows if r["matches_label"]]
        assert matched and all(r["optgap_pct"] == 0.0 for r in matched)
        assert all(r["optgap_pct"] >= 0 for r in rows if r["feasible"])

    def test_metrics_recomputed_from_csv(self, tmp_path, small_records):
        csv_path, tcsv = tmp_path / "rows.csv", tmp_path / "timing.csv"
        stub = lambda inst: np.zeros(inst.T, dtype=int)
        metrics, _, _ = evaluate_model(stub, small_records, RepairOptions(), csv_path, tcsv)
        again = aggregate(read_rows_csv(csv_path), read_rows_csv(tcsv))
        assert metrics_to_dict(again) == metrics_to_dict(metrics)

    def test_csv_is_deterministic(self, tmp_path, small_records):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        evaluate_model(oracle_predictor(small_records, True), small_records, RepairOptions(), a)
        evaluate_model(oracle_predictor(small_records, True), small_records, RepairOptions(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_report_columns(self, small_records):
        metrics, _, _ = evaluate_model(oracle_predictor(small_records), small_records)
        text = format_report(metrics)
        for col in ("TimeExact", "TimeML", "Timegain(%)", "Inf(%)", "Optgap(%)"):
            assert col in text
        assert len(text.splitlines()) == 2 + 7

    def test_timegain_definition(self):
        rows = [{"index": 0, "c": 3, "f": 1000, "feasible": True, "direct_feasible": True,
                 "optgap_pct": 0.0, "provenance": "MLDirect"}]
        m = aggregate(rows, [{"index": 0, "time_ml": 0.25, "time_exact": 1.0}])["overall"]
        assert m.timegain_pct == pytest.approx(75.0)


class TestAttention:
    @pytest.mark.parametrize("kind", ["encoder", "decoder", "cross"])
    def test_rows_sum_to_one(self, i1_checkpoint, kind):
        for _, _, m in attention_matrices(i1_checkpoint, make_i1(), kind):
            assert np.max(np.abs(m.sum(axis=1) - 1.0)) < 1e-6

    def test_file_shape_and_determinism(self, tmp_path, i1_checkpoint):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        rows = export_attention(i1_checkpoint, make_i1(), a)
        export_attention(i1_checkpoint, make_i1(), b)
        assert rows == SMALL_MODEL.enc_layers * SMALL_MODEL.heads * 5 * 2
        assert a.read_bytes() == b.read_bytes()
        with open(a) as fh:
            body = list(csv.reader(fh))[1:]
        assert len(body) == rows
        for r in body:
            assert abs(sum(float(v) for v in r[3:]) - 1.0) < 1e-6

    def test_cross_rows(self, tmp_path, i1_checkpoint):
        rows = export_attention(i1_checkpoint, make_i1(), tmp_path / "x.csv", kind="cross")
        assert rows == SMALL_MODEL.dec_layers * SMALL_MODEL.heads * 2

    def test_bad_kind(self, i1_checkpoint):
        with pytest.raises(ValueError):
            attention_matrices(i1_checkpoint, make_i1(), "pooled")


def test_record_json_round_trip(small_records):
    rec = small_records[0]
    back = DatasetRecord.from_json(rec.to_json())
    assert back.to_json() == rec.to_json()
