"""Command-line entry point for the triage pipeline.

Anything that shapes results lives in the YAML config; flags carry only
paths, the seed override and verbosity. Each writing subcommand leaves a
manifest.json indexing its run directory with checksums.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .cohort import load_cohort_dir, save_cohort
from .config import RunConfig, config_to_dict, load_config
from .detector import (
    OSORIO_MODES,
    Detection,
    EventMatchReport,
    detection_table,
    match_events,
    osorio_detect,
    sqi_suppress,
)
from .errors import EcgTriageError, InsufficientDataError
from .experiment import (
    learning_curve,
    make_splits,
    patient_labels,
    run_experiment,
)
from .features import (
    build_dataset,
    hour_slices,
    load_rows,
    quality_scan,
    save_rows,
)
from .preprocess import filter_nn
from .reports import (
    emit_models,
    emit_reports,
    metrics_from_dict,
    metrics_to_dict,
    patient_summary,
    scenario_table,
    write_csv,
    write_manifest,
)
from .synth import synth_cohort
from .utils import derive_seed

logger = logging.getLogger(__name__)


def _ml_params(cfg: RunConfig):
    return replace(cfg.ml, seed=derive_seed(cfg.seed, "ml"))


def _meta(cfg: RunConfig, command: str, **extra) -> dict:
    meta = {"command": command, "seed": cfg.seed,
            "config": config_to_dict(cfg)}
    meta.update(extra)
    return meta


def _collect_files(out: Path) -> list[str]:
    return sorted(
        str(p.relative_to(out)) for p in out.rglob("*")
        if p.is_file() and p.name != "manifest.json")


def _cmd_synth(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = Path(args.out)
    syn = synth_cohort(cfg.cohort, seed=derive_seed(cfg.seed, "cohort"))
    save_cohort(syn.cohort, out / "cohort")
    n_seiz = sum(1 for v in syn.labels.values() if v.value == "seizure")
    write_manifest(out, _collect_files(out), _meta(
        cfg, "synth", patients=len(syn.cohort.patient_ids),
        seizure_patients=n_seiz, segments=len(syn.cohort.records)))
    logger.info("wrote cohort of %d patients to %s",
                len(syn.cohort.patient_ids), out)
    return 0


def _cmd_preprocess(args) -> int:
    cfg = load_config(args.config, args.seed)
    cohort = load_cohort_dir(args.cohort)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for pid in cohort.patient_ids:
        for rec in cohort.records_of(pid):
            for h, sub in hour_slices(rec, cfg.max_hours):
                _, _, mean_bsqi = quality_scan(sub)
                rows.append([pid, rec.segment_id, str(h),
                             f"{mean_bsqi:.6f}",
                             str(int(mean_bsqi >= cfg.gate))])
    write_csv(out / "quality.csv",
              ["patient_id", "segment_id", "hour_index", "mean_bsqi",
               "passes"], rows)
    write_manifest(out, ["quality.csv"], _meta(
        cfg, "preprocess", hours=len(rows),
        passing=sum(int(r[4]) for r in rows)))
    return 0


def _cmd_features(args) -> int:
    cfg = load_config(args.config, args.seed)
    cohort = load_cohort_dir(args.cohort)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = build_dataset(cohort, gate=cfg.gate, max_hours=cfg.max_hours)
    save_rows(out / "features.csv", rows)
    labels = patient_labels(rows)
    write_manifest(out, ["features.csv"], _meta(
        cfg, "features", rows=len(rows), patients=len(labels),
        seizure_patients=sum(labels.values())))
    logger.info("extracted %d rows from %d patients", len(rows), len(labels))
    return 0


def _cmd_detect_local(args) -> int:
    cfg = load_config(args.config, args.seed)
    cohort = load_cohort_dir(args.cohort)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    det_rows: list[list[str]] = []
    counts = {m: {"tp": 0, "fp": 0, "fn": 0, "matched": 0}
              for m in OSORIO_MODES}
    for pid in cohort.patient_ids:
        per_mode: dict[str, list[Detection]] = {m: [] for m in OSORIO_MODES}
        for rec in cohort.records_of(pid):
            try:
                prim, sqi, _ = quality_scan(rec)
                nn = filter_nn(prim)
            except InsufficientDataError as exc:
                logger.warning("skipping %s/%s: %s", pid, rec.segment_id, exc)
                continue
            for mode in OSORIO_MODES:
                try:
                    dets = osorio_detect(
                        nn, mode, window_s=cfg.detector.baseline_window_s)
                except InsufficientDataError as exc:
                    logger.warning("%s/%s %s: %s", pid, rec.segment_id,
                                   mode, exc)
                    continue
                dets = sqi_suppress(dets, sqi, cfg.detector.sqi_gate)
                for d in dets:
                    det_rows.append([pid, rec.segment_id, mode,
                                     f"{d.t_s + rec.start_offset_s:.3f}",
                                     str(int(d.suppressed))])
                per_mode[mode].extend(
                    replace(d, t_s=d.t_s + rec.start_offset_s) for d in dets)
        events = cohort.events_of(pid)
        for mode in OSORIO_MODES:
            rep = match_events(per_mode[mode], events,
                               pre_s=cfg.detector.match_pre_s,
                               post_s=cfg.detector.match_post_s)
            c = counts[mode]
            c["tp"] += rep.tp
            c["fp"] += rep.fp
            c["fn"] += rep.fn
            c["matched"] += rep.matched_detections
    reports = {}
    for mode, c in counts.items():
        refs = c["tp"] + c["fn"]
        alarms = c["matched"] + c["fp"]
        reports[mode] = EventMatchReport(
            tp=c["tp"], fp=c["fp"], fn=c["fn"],
            se=c["tp"] / refs if refs else None,
            ppv=c["matched"] / alarms if alarms else None,
            matched_detections=c["matched"])
    (out / "table3.csv").write_text(detection_table(reports))
    write_csv(out / "detections.csv",
              ["patient_id", "segment_id", "mode", "t_s", "suppressed"],
              det_rows)
    write_manifest(out, ["table3.csv", "detections.csv"], _meta(
        cfg, "detect-local", detections=len(det_rows)))
    return 0


def _run_ml(cfg: RunConfig, rows):
    labels = patient_labels(rows)
    plan = make_splits(sorted(labels), labels,
                       n_splits=cfg.experiment.n_splits,
                       test_frac=cfg.experiment.test_frac,
                       seed=derive_seed(cfg.seed, "splits"))
    reports = run_experiment(rows, plan, cfg.experiment.variants,
                             _ml_params(cfg), cfg.experiment.workers)
    curves = None
    if cfg.experiment.curve_fractions:
        params = _ml_params(cfg)
        curves = {v: learning_curve(rows, plan, v,
                                    list(cfg.experiment.curve_fractions),
                                    params)
                  for v in cfg.experiment.variants}
    return labels, reports, curves


def _cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    rows = load_rows(args.features)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    labels, reports, curves = _run_ml(cfg, rows)
    files = emit_models(out, reports)
    blob = metrics_to_dict(reports, curves=curves,
                           patients=patient_summary(rows))
    (out / "metrics.json").write_text(
        json.dumps(blob, sort_keys=True, indent=2) + "\n")
    files.append("metrics.json")
    write_manifest(out, files, _meta(
        cfg, "train", rows=len(rows), patients=len(labels)))
    return 0


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config, args.seed)
    cohort = load_cohort_dir(args.cohort)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = build_dataset(cohort, gate=cfg.gate, max_hours=cfg.max_hours)
    save_rows(out / "features.csv", rows)
    labels, reports, curves = _run_ml(cfg, rows)
    files = ["features.csv"]
    files += emit_reports(out, reports, patient_summary(rows), curves,
                          scenario_k=cfg.experiment.scenario_k)
    files += emit_models(out, reports)
    write_manifest(out, files, _meta(
        cfg, "evaluate", rows=len(rows), patients=len(labels),
        seizure_patients=sum(labels.values()),
        test_inference="first quality-passing hour within the first "
                       f"{cfg.max_hours} h"))
    for v, rep in reports.items():
        s = rep.summary()
        logger.info("%s: test AUROC %.3f +/- %.3f", v, s["test_mean"],
                    s["test_std"])
    return 0


def _cmd_scenario(args) -> int:
    cfg = load_config(args.config, args.seed)
    blob = json.loads(Path(args.metrics).read_text())
    reports, _, _ = metrics_from_dict(blob)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    header, rows = scenario_table(reports, k=cfg.experiment.scenario_k)
    write_csv(out / "scenario.csv", header, rows)
    write_manifest(out, ["scenario.csv"], _meta(
        cfg, "scenario", k=cfg.experiment.scenario_k))
    return 0


def _cmd_report(args) -> int:
    cfg = load_config(args.config, args.seed)
    blob = json.loads(Path(args.metrics).read_text())
    reports, curves, patients = metrics_from_dict(blob)
    out = Path(args.out)
    files = emit_reports(out, reports, patients, curves,
                         scenario_k=cfg.experiment.scenario_k)
    write_manifest(out, files, _meta(cfg, "report"))
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ecgtriage",
        description="ECG-based seizure-risk triage pipeline")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("-c", "--config", required=config_required,
                        help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the master seed")
        sp.add_argument("-o", "--out", required=True,
                        help="run output directory")
        sp.add_argument("-v", "--verbose", action="count", default=0)

    sp = sub.add_parser("synth", help="generate a synthetic cohort")
    common(sp)
    sp.set_defaults(func=_cmd_synth)

    sp = sub.add_parser("preprocess",
                        help="per-hour signal quality table for a cohort")
    sp.add_argument("--cohort", required=True, help="cohort directory")
    common(sp)
    sp.set_defaults(func=_cmd_preprocess)

    sp = sub.add_parser("features",
                        help="extract hourly feature rows from a cohort")
    sp.add_argument("--cohort", required=True)
    common(sp)
    sp.set_defaults(func=_cmd_features)

    sp = sub.add_parser("detect-local",
                        help="heart-rate event detection scored per event")
    sp.add_argument("--cohort", required=True)
    common(sp)
    sp.set_defaults(func=_cmd_detect_local)

    sp = sub.add_parser("train",
                        help="train variant models from a feature file")
    sp.add_argument("--features", required=True,
                    help="features.csv from the features step")
    common(sp)
    sp.set_defaults(func=_cmd_train)

    sp = sub.add_parser("evaluate",
                        help="full cohort-to-reports evaluation run")
    sp.add_argument("--cohort", required=True)
    common(sp, config_required=True)
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("scenario",
                        help="top-k follow-up yield from saved metrics")
    sp.add_argument("--metrics", required=True, help="metrics.json path")
    common(sp)
    sp.set_defaults(func=_cmd_scenario)

    sp = sub.add_parser("report",
                        help="re-emit report tables from saved metrics")
    sp.add_argument("--metrics", required=True)
    common(sp)
    sp.set_defaults(func=_cmd_report)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(level)
    try:
        return args.func(args)
    except EcgTriageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
