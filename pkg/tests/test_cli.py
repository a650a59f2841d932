"""Command-line interface: exit codes, run layout, determinism.

One small rendered cohort is synthesized once per module and every
subcommand is exercised against it through ``main(argv)``.
"""

import hashlib
import json
from pathlib import Path

import pytest

from ecgtriage.cli import main

CFG = """\
seed: 7
cohort:
  n_patients: 12
  n_seizure: 5
  duration_s: 660.0
  seizure:
    episode_onset_s: 300.0
    label_event: [1000.0, 360.0]
    hr_mean_bpm: 112.0
ml:
  n_trees: 10
  rfe_trees: 5
  budget: 5
  folds: 2
experiment:
  n_splits: 2
  scenario_k: 2
  variants: ["Age", "META+HRV+MOR"]
"""


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "cfg.yaml"
    cfg.write_text(CFG)
    assert main(["synth", "-c", str(cfg), "-o", str(root / "synth")]) == 0
    return {"root": root, "cfg": str(cfg),
            "cohort": str(root / "synth" / "cohort")}


@pytest.fixture(scope="module")
def eval_dir(ws):
    out = ws["root"] / "eval"
    assert main(["evaluate", "-c", ws["cfg"], "--cohort", ws["cohort"],
                 "-o", str(out)]) == 0
    return out


def read_csv(path):
    lines = Path(path).read_text().strip().split("\n")
    header = lines[0].split(",")
    return header, [dict(zip(header, l.split(","))) for l in lines[1:]]


def tree_bytes(root):
    root = Path(root)
    return {str(p.relative_to(root)): p.read_bytes()
            for p in root.rglob("*") if p.is_file()}


class TestUsage:
    @pytest.mark.parametrize("argv", [["--help"], ["evaluate", "--help"]])
    def test_help_exits_zero(self, argv):
        with pytest.raises(SystemExit) as e:
            main(argv)
        assert e.value.code == 0

    def test_no_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as e:
            main([])
        assert e.value.code == 2

    def test_evaluate_requires_config(self, tmp_path):
        with pytest.raises(SystemExit) as e:
            main(["evaluate", "--cohort", "c", "-o", str(tmp_path)])
        assert e.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["--version"])
        assert e.value.code == 0
        assert "ecgtriage" in capsys.readouterr().out


class TestPipeline:
    def test_synth_manifest(self, ws):
        blob = json.loads((ws["root"] / "synth" / "manifest.json").read_text())
        meta = blob["meta"]
        assert meta["command"] == "synth"
        assert meta["patients"] == 12
        assert meta["seizure_patients"] == 5
        assert meta["config"]["cohort"]["n_patients"] == 12
        rel = "cohort/metadata.csv"
        digest = hashlib.sha256(
            (ws["root"] / "synth" / rel).read_bytes()).hexdigest()
        assert blob["files"][rel] == digest

    def test_preprocess(self, ws):
        out = ws["root"] / "prep"
        assert main(["preprocess", "-c", ws["cfg"], "--cohort", ws["cohort"],
                     "-o", str(out)]) == 0
        _, rows = read_csv(out / "quality.csv")
        assert len(rows) == 12  # one recorded hour per patient
        assert all(r["passes"] in ("0", "1") for r in rows)
        assert all(0.0 <= float(r["mean_bsqi"]) <= 1.0 for r in rows)

    def test_detect_local(self, ws):
        out = ws["root"] / "det"
        assert main(["detect-local", "-c", ws["cfg"], "--cohort",
                     ws["cohort"], "-o", str(out)]) == 0
        header, rows = read_csv(out / "table3.csv")
        assert header == ["mode", "TP", "FP", "FN", "Se", "PPV"]
        assert [r["mode"] for r in rows] == ["osorio15", "osorio30"]
        # every seizure patient has a detectable in-record episode
        r15 = rows[0]
        assert int(r15["TP"]) + int(r15["FN"]) == 10  # episode + label event
        assert (out / "detections.csv").exists()

    def test_evaluate_outputs(self, eval_dir):
        _, table4 = read_csv(eval_dir / "table4.csv")
        assert [r["variant"] for r in table4] == ["Age", "META+HRV+MOR"]
        for r in table4:
            assert 0.0 <= float(r["test_auroc_mean"]) <= 1.0
        assert len(list((eval_dir / "models").glob("*.json"))) == 4
        _, scen = read_csv(eval_dir / "scenario.csv")
        assert scen, "scenario_k=2 fits the 4-patient test sides"
        assert all(0.0 <= float(r["top_k_ppv"]) <= 1.0 for r in scen)
        blob = json.loads((eval_dir / "manifest.json").read_text())
        assert "features.csv" in blob["files"]
        digest = hashlib.sha256(
            (eval_dir / "table4.csv").read_bytes()).hexdigest()
        assert blob["files"]["table4.csv"] == digest

    def test_rerun_is_byte_identical(self, ws, eval_dir):
        out2 = ws["root"] / "eval2"
        assert main(["evaluate", "-c", ws["cfg"], "--cohort", ws["cohort"],
                     "-o", str(out2)]) == 0
        assert tree_bytes(eval_dir) == tree_bytes(out2)

    def test_train_matches_evaluate(self, ws, eval_dir):
        out = ws["root"] / "train"
        assert main(["train", "-c", ws["cfg"], "--features",
                     str(eval_dir / "features.csv"), "-o", str(out)]) == 0
        got = json.loads((out / "metrics.json").read_text())
        want = json.loads((eval_dir / "metrics.json").read_text())
        assert got["variants"] == want["variants"]
        assert len(list((out / "models").glob("*.json"))) == 4

    def test_seed_override_changes_results(self, ws, eval_dir):
        out = ws["root"] / "train8"
        assert main(["train", "-c", ws["cfg"], "--seed", "8", "--features",
                     str(eval_dir / "features.csv"), "-o", str(out)]) == 0
        got = json.loads((out / "metrics.json").read_text())
        want = json.loads((eval_dir / "metrics.json").read_text())
        assert got["variants"] != want["variants"]

    def test_scenario_and_report_from_metrics(self, ws, eval_dir):
        scen = ws["root"] / "scen"
        assert main(["scenario", "-c", ws["cfg"], "--metrics",
                     str(eval_dir / "metrics.json"), "-o", str(scen)]) == 0
        assert (scen / "scenario.csv").read_bytes() == \
            (eval_dir / "scenario.csv").read_bytes()
        rep = ws["root"] / "rep"
        assert main(["report", "-c", ws["cfg"], "--metrics",
                     str(eval_dir / "metrics.json"), "-o", str(rep)]) == 0
        assert (rep / "table4.csv").read_bytes() == \
            (eval_dir / "table4.csv").read_bytes()


class TestFailures:
    def test_missing_cohort_exits_1(self, ws, tmp_path, capsys):
        rc = main(["features", "-c", ws["cfg"], "--cohort",
                   str(tmp_path / "absent"), "-o", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_config_exits_1(self, tmp_path, capsys):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("cohort: {n_patient: 4}\n")
        rc = main(["synth", "-c", str(cfg), "-o", str(tmp_path / "o")])
        assert rc == 1
        assert "unknown key cohort.n_patient" in capsys.readouterr().err

    def test_missing_metrics_exits_1(self, ws, tmp_path, capsys):
        rc = main(["scenario", "-c", ws["cfg"], "--metrics",
                   str(tmp_path / "none.json"), "-o", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err
