"""Run artifacts: report tables, model bundles, metrics dump, manifest.

Every file here is a pure function of the results passed in, so a rerun
with the same configuration and seed reproduces each byte. No timestamps,
no absolute paths, no environment echoes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .cohort import META_COLUMNS
from .experiment import (
    CurvePoint,
    SplitResult,
    VariantReport,
    improvement,
    scenario_ppv,
)
from .features import FEATURE_NAMES, FeatureRow
from .hrv import HRV_FEATURE_NAMES
from .morphology import MOR_FEATURE_NAMES

MODEL_DIR = "models"

_HRV_UNITS = {
    "bSQI": "fraction",
    "Alpha 1": "unitless", "Alpha 2": "unitless", "BETA": "unitless",
    "AVNN": "ms", "SDNN": "ms", "RMSSD": "ms", "SEM": "ms",
    "SD1": "ms", "SD2": "ms",
    "pNN50": "%", "PIP": "%", "IALS": "fraction", "PSS": "%", "PAS": "%",
    "HF power": "ms^2", "LF power": "ms^2", "VLF power": "ms^2",
    "Total power": "ms^2",
    "HF norm": "n.u.", "LF norm": "n.u.", "VLF norm": "n.u.",
    "HF peak": "Hz", "LF peak": "Hz",
    "LF to HF": "ratio", "SampEn": "unitless",
}

_P_DURATION_NOTE = ("duration of the P wave; D prefix resolves the source "
                    "tables reusing P-wave names for both duration and "
                    "amplitude")


def _mor_units(name: str) -> tuple[str, str]:
    """(units, note) for one morphology feature."""
    if name.startswith("D") and name[1:] in (
            f"{s}{f}" for f in ("P", "PR", "PRseg", "QRS", "QT", "T", "RR")
            for s in ("med", "mean", "std", "max")):
        return "ms", _P_DURATION_NOTE if name.endswith("P") else ""
    if name.startswith("IR"):
        return "ratio", "consecutive NN-interval ratio"
    if name in ("MDPR", "MAPR"):
        return "ms", "PR measured from P onset to the R peak"
    if name.startswith("DmedQT_"):
        return "ms", "corrected QT from median QT and median NN"
    if name.endswith("QRSdiff"):
        kind = "area" if name.startswith("S") else "width"
        return "%", f"absolute {kind} deviation from the reference QRS"
    if name.startswith("S") and name.endswith("QRS"):
        return "1e-4 V*s", "QRS area; S3/S4 list '1e-4 v', disambiguated here"
    if name.endswith("DR"):
        return "1e-4 V", "beat-to-beat change in R amplitude"
    return "1e-4 V", ""


def data_dictionary() -> list[tuple[str, str, str, str]]:
    """(feature, block, units, notes) for every model feature."""
    rows = []
    for name in META_COLUMNS:
        units = "years" if name == "Age" else "0/1"
        note = "" if name == "Age" else "absent or unknown encoded as 0"
        rows.append((name, "META", units, note))
    for name in HRV_FEATURE_NAMES:
        rows.append((name, "HRV", _HRV_UNITS[name], ""))
    for name in MOR_FEATURE_NAMES:
        units, note = _mor_units(name)
        rows.append((name, "MOR", units, note))
    return rows


def _fmt(value, nd: int = 6) -> str:
    if value is None:
        return ""
    v = float(value)
    if np.isnan(v):
        return ""
    return f"{v:.{nd}f}"


def write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)]
    lines += [",".join(r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _split_to_dict(res: SplitResult) -> dict:
    return {
        "split": res.split,
        "train_auroc": res.train_auroc,
        "test_auroc": res.test_auroc,
        "selected": list(res.selected),
        "importances": res.importances,
        "best_params": res.best_params,
        "test_scores": res.test_scores,
        "test_labels": res.test_labels,
        "error": res.error,
    }


def _split_from_dict(blob: dict) -> SplitResult:
    return SplitResult(
        split=int(blob["split"]),
        train_auroc=blob["train_auroc"],
        test_auroc=blob["test_auroc"],
        selected=tuple(blob["selected"]),
        importances=dict(blob["importances"]),
        best_params=dict(blob["best_params"]),
        test_scores=dict(blob["test_scores"]),
        test_labels={k: int(v) for k, v in blob["test_labels"].items()},
        error=blob["error"],
    )


def metrics_to_dict(reports: dict[str, VariantReport],
                    curves: dict[str, list[CurvePoint]] | None = None,
                    patients: dict[str, dict] | None = None) -> dict:
    out = {
        "version": __version__,
        "variants": {
            v: [_split_to_dict(r) for r in rep.splits]
            for v, rep in reports.items()},
    }
    if curves:
        out["curves"] = {
            v: [{"fraction": p.fraction,
                 "mean_train_patients": p.mean_train_patients,
                 "mean_test_auroc": p.mean_test_auroc,
                 "n_splits": p.n_splits} for p in pts]
            for v, pts in curves.items()}
    if patients:
        out["patients"] = patients
    return out


def metrics_from_dict(blob: dict):
    reports = {
        v: VariantReport(variant=v, splits=tuple(
            _split_from_dict(s) for s in splits))
        for v, splits in blob["variants"].items()}
    curves = {
        v: [CurvePoint(**p) for p in pts]
        for v, pts in blob.get("curves", {}).items()} or None
    return reports, curves, blob.get("patients")


def patient_summary(rows: list[FeatureRow]) -> dict[str, dict]:
    """Per-patient age and label, for the age-distribution report."""
    out: dict[str, dict] = {}
    for row in rows:
        out.setdefault(row.patient_id,
                       {"age": row.values["Age"], "label": row.label})
    return out


def scenario_table(reports: dict[str, VariantReport],
                   k: int = 8) -> tuple[list[str], list[list[str]]]:
    """Top-k follow-up yield per variant and split, as CSV cells.

    Splits that failed or scored fewer than ``k`` patients are omitted;
    the improvement column is blank when the test side has no positives.
    """
    rows = []
    for v, rep in reports.items():
        for r in rep.splits:
            if r.error is not None or len(r.test_scores) < k:
                continue
            ppv = scenario_ppv(r.test_scores, r.test_labels, k=k)
            prev = float(np.mean(list(r.test_labels.values())))
            gain = _fmt(improvement(ppv, prev)) if prev > 0 else ""
            rows.append([v, str(r.split), str(k), _fmt(ppv), _fmt(prev),
                         gain])
    header = ["variant", "split", "k", "top_k_ppv", "prevalence",
              "improvement_vs_random"]
    return header, rows


def emit_reports(out_dir, reports: dict[str, VariantReport],
                 patients: dict[str, dict] | None = None,
                 curves: dict[str, list[CurvePoint]] | None = None,
                 scenario_k: int = 8) -> list[str]:
    """Write the report tables; returns the relative file names written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []

    rows4 = []
    for v, rep in reports.items():
        s = rep.summary()
        rows4.append([v, _fmt(s["train_mean"], 4), _fmt(s["train_std"], 4),
                      _fmt(s["test_mean"], 4), _fmt(s["test_std"], 4)])
    write_csv(out / "table4.csv",
               ["variant", "train_auroc_mean", "train_auroc_std",
                "test_auroc_mean", "test_auroc_std"], rows4)
    written.append("table4.csv")

    rows_sp = []
    for v, rep in reports.items():
        for r in rep.splits:
            rows_sp.append([v, str(r.split), _fmt(r.train_auroc),
                            _fmt(r.test_auroc), r.error or ""])
    write_csv(out / "auroc_splits.csv",
               ["variant", "split", "train_auroc", "test_auroc", "error"],
               rows_sp)
    written.append("auroc_splits.csv")

    rows_imp = []
    for v, rep in reports.items():
        for r in rep.splits:
            for name in r.selected:
                rows_imp.append([v, str(r.split), name,
                                 _fmt(r.importances[name])])
    write_csv(out / "importance.csv",
               ["variant", "split", "feature", "importance"], rows_imp)
    written.append("importance.csv")

    header_sc, rows_sc = scenario_table(reports, k=scenario_k)
    write_csv(out / "scenario.csv", header_sc, rows_sc)
    written.append("scenario.csv")

    if curves:
        rows_lc = []
        for v, pts in curves.items():
            for p in pts:
                rows_lc.append([v, _fmt(p.fraction, 3),
                                _fmt(p.mean_train_patients, 1),
                                _fmt(p.mean_test_auroc), str(p.n_splits)])
        write_csv(out / "learning_curve.csv",
                   ["variant", "fraction", "mean_train_patients",
                    "mean_test_auroc", "n_splits"], rows_lc)
        written.append("learning_curve.csv")

    if patients:
        ages = np.array([p["age"] for p in patients.values()], dtype=float)
        labels = np.array([p["label"] for p in patients.values()], dtype=int)
        counts, edges = np.histogram(ages, bins=10)
        rows_age = []
        for i in range(len(counts)):
            lo, hi = edges[i], edges[i + 1]
            sel = (ages >= lo) & ((ages < hi) | (i == len(counts) - 1))
            rows_age.append([_fmt(lo, 3), _fmt(hi, 3),
                             str(int(np.sum(labels[sel] == 1))),
                             str(int(np.sum(labels[sel] == 0)))])
        write_csv(out / "age_histogram.csv",
                   ["bin_left", "bin_right", "seizure", "non_seizure"],
                   rows_age)
        written.append("age_histogram.csv")

    write_csv(out / "data_dictionary.csv",
               ["feature", "block", "units", "notes"],
               [[f, b, u, n] for f, b, u, n in data_dictionary()])
    written.append("data_dictionary.csv")

    blob = metrics_to_dict(reports, curves=curves, patients=patients)
    (out / "metrics.json").write_text(
        json.dumps(blob, sort_keys=True, indent=2) + "\n")
    written.append("metrics.json")
    return written


def emit_models(out_dir, reports: dict[str, VariantReport]) -> list[str]:
    """Write one pipeline bundle per trained split under models/."""
    out = Path(out_dir) / MODEL_DIR
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for v, rep in reports.items():
        slug = v.replace("+", "_").lower()
        for r in rep.splits:
            if r.model is None:
                continue
            name = f"{MODEL_DIR}/{slug}_split{r.split:02d}.json"
            (Path(out_dir) / name).write_text(
                json.dumps(r.model, sort_keys=True,
                           separators=(",", ":")) + "\n")
            written.append(name)
    return written


def write_manifest(out_dir, files: list[str], meta: dict) -> str:
    """Checksummed index of a run directory; written last."""
    out = Path(out_dir)
    entries = {}
    for name in sorted(files):
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        entries[name] = digest
    manifest = {
        "version": __version__,
        "meta": meta,
        "files": entries,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return "manifest.json"
