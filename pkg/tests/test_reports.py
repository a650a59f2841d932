"""Report emission: schemas, determinism, manifest checksums."""

import hashlib
import json

import pytest

from ecgtriage.experiment import (
    PipelineParams,
    learning_curve,
    make_splits,
    patient_labels,
    run_experiment,
    score_rows,
)
from ecgtriage.reports import (
    data_dictionary,
    emit_models,
    emit_reports,
    metrics_from_dict,
    metrics_to_dict,
    patient_summary,
    write_manifest,
)

from test_experiment import planted_rows

FAST = PipelineParams(n_trees=30, rfe_trees=10, budget=5, folds=2, seed=3)
VARIANTS = ("Age", "META+HRV+MOR")


def _make_run(seed=3):
    rows = planted_rows(n=24, n_pos=8, seed=2)
    labels = patient_labels(rows)
    plan = make_splits(sorted(labels), labels, n_splits=2, seed=1)
    params = PipelineParams(n_trees=30, rfe_trees=10, budget=5, folds=2,
                            seed=seed)
    reports = run_experiment(rows, plan, VARIANTS, params)
    curves = {"Age": learning_curve(rows, plan, "Age", [1.0], params)}
    return rows, reports, curves


@pytest.fixture(scope="module")
def run():
    return _make_run()


class TestDataDictionary:
    def test_covers_every_feature(self):
        rows = data_dictionary()
        assert len(rows) == 116
        blocks = [b for _, b, _, _ in rows]
        assert blocks.count("META") == 16
        assert blocks.count("HRV") == 26
        assert blocks.count("MOR") == 74
        assert all(units for _, _, units, _ in rows)

    def test_documents_p_duration_rename(self):
        notes = {f: n for f, _, _, n in data_dictionary()}
        for name in ("DmedP", "DmeanP", "DstdP", "DmaxP"):
            assert "duration" in notes[name]
        # The amplitude quartet keeps the short name and the volt units.
        units = {f: u for f, _, u, _ in data_dictionary()}
        assert units["medP"] == "1e-4 V"
        assert units["SmedQRS"] == "1e-4 V*s"
        assert "width" in notes["DmedQRSdiff"]
        assert "area" in notes["SmedQRSdiff"]


class TestEmitReports:
    def test_table4_shape(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves)
        lines = (tmp_path / "table4.csv").read_text().strip().split("\n")
        assert len(lines) == 1 + len(VARIANTS)
        assert lines[0].split(",") == [
            "variant", "train_auroc_mean", "train_auroc_std",
            "test_auroc_mean", "test_auroc_std"]
        assert all(len(l.split(",")) == 5 for l in lines)

    def test_importance_lists_nine_per_split(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves)
        lines = (tmp_path / "importance.csv").read_text().strip().split("\n")
        wide = [l for l in lines[1:] if l.startswith("META+HRV+MOR,")]
        for split in ("0", "1"):
            assert sum(l.split(",")[1] == split for l in wide) == 9
        narrow = [l for l in lines[1:] if l.startswith("Age,")]
        assert all(l.split(",")[2] == "Age" for l in narrow)

    def test_scenario_rows_in_range(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves,
                     scenario_k=8)
        lines = (tmp_path / "scenario.csv").read_text().strip().split("\n")
        assert len(lines) > 1
        for line in lines[1:]:
            ppv = float(line.split(",")[3])
            assert 0.0 <= ppv <= 1.0

    def test_age_histogram_counts_patients(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves)
        lines = (tmp_path / "age_histogram.csv").read_text().strip().split("\n")
        total = sum(int(l.split(",")[2]) + int(l.split(",")[3])
                    for l in lines[1:])
        assert total == 24

    def test_learning_curve_written(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves)
        lines = (tmp_path / "learning_curve.csv").read_text().strip().split("\n")
        assert lines[1].startswith("Age,1.000,")

    def test_metrics_round_trip(self, run, tmp_path):
        rows, reports, curves = run
        emit_reports(tmp_path, reports, patient_summary(rows), curves)
        blob = json.loads((tmp_path / "metrics.json").read_text())
        back, curves2, patients = metrics_from_dict(blob)
        assert back["Age"].test_aurocs == reports["Age"].test_aurocs
        assert back["META+HRV+MOR"].splits[0].selected == \
            reports["META+HRV+MOR"].splits[0].selected
        assert curves2["Age"][0].fraction == 1.0
        assert len(patients) == 24

    def test_rerun_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rows, reports, curves = _make_run()
            files = emit_reports(out, reports, patient_summary(rows), curves)
            files += emit_models(out, reports)
            write_manifest(out, files, meta={"seed": 3})
        for name in ["table4.csv", "auroc_splits.csv", "importance.csv",
                     "scenario.csv", "metrics.json", "manifest.json"]:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        for f in sorted((a / "models").iterdir()):
            assert f.read_bytes() == (b / "models" / f.name).read_bytes()

    def test_seed_changes_reports(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out, seed in ((a, 3), (b, 4)):
            rows, reports, curves = _make_run(seed=seed)
            emit_reports(out, reports, patient_summary(rows), curves)
        assert (a / "auroc_splits.csv").read_bytes() != \
            (b / "auroc_splits.csv").read_bytes()


class TestModelsAndManifest:
    def test_model_bundles_score(self, run, tmp_path):
        rows, reports, curves = run
        files = emit_models(tmp_path, reports)
        assert files
        bundle = json.loads((tmp_path / files[0]).read_text())
        scored = score_rows(bundle, rows)
        assert len(scored) == 24
        assert all(0.0 <= v <= 1.0 for v in scored.values())

    def test_manifest_checksums(self, run, tmp_path):
        rows, reports, curves = run
        files = emit_reports(tmp_path, reports, patient_summary(rows), curves)
        write_manifest(tmp_path, files, meta={"seed": 3})
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert set(manifest["files"]) == set(files)
        for name, digest in manifest["files"].items():
            got = hashlib.sha256((tmp_path / name).read_bytes()).hexdigest()
            assert got == digest
