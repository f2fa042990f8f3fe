# gazeid/main.py
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from gazeid.core.config import settings
from gazeid.core.deps import get_repository, get_result_store, get_workers
from gazeid.core.errors import EXIT_DATA, EXIT_OK, EXIT_USAGE, DataError, GazeIdError, UsageError
from gazeid.database.csv_dataset import CsvDatasetRepository
from gazeid.database.model_store import save_model
from gazeid.database.recording_csv import read_recording, write_recording
from gazeid.database.result_store import format_accuracy
from gazeid.schemas.experiment import ExperimentConfig, SmoothingConfig, SplitConfig, SweepPlan
from gazeid.schemas.features import BLINK_FEATURES, FeatureSchema
from gazeid.schemas.gaze import BIOEYE_GEOMETRY, BlinkParams, IvtParams
from gazeid.services.experiment_service import ExperimentService
from gazeid.services.geometry_service import GeometryService
from gazeid.services.optimize_service import OptimizeService
from gazeid.services.synthetic_service import SyntheticService

logger = logging.getLogger("gazeid")


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s :: %(message)s",
        stream=sys.stdout,
        force=True,
    )


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors are exit code 1 here."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------- configuration

def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: dict, overrides: Sequence[str]) -> dict:
    """`a.b=value` sets data["a"]["b"]; value is read as JSON when it parses, else as a string."""
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise UsageError(f"override must look like key=value, got {item!r}")
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                if p in node and node[p] is None:
                    node[p] = {}
                else:
                    raise UsageError(f"unknown config key {key!r}")
            node = node[p]
        if parts[-1] not in node and not _optional_key(parts):
            raise UsageError(f"unknown config key {key!r}")
        node[parts[-1]] = _parse_value(raw)
    return data


def _optional_key(parts: List[str]) -> bool:
    # fields of optional sub-models (subgroup, truncate) may be absent from the dump
    return len(parts) == 2 and parts[0] in ("subgroup", "truncate")


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    path = Path(args.config)
    if not path.is_file():
        raise DataError(f"config file not found: {path}")
    cfg = ExperimentConfig.model_validate_json(path.read_text(encoding="utf-8"))
    data = cfg.model_dump(mode="json")
    if not Path(data["manifest"]).is_absolute():
        data["manifest"] = str((path.parent / data["manifest"]).resolve())
    overrides = list(getattr(args, "set", None) or [])
    if getattr(args, "vt", None) is not None:
        overrides.append(f"ivt.velocity_threshold_deg_s={args.vt}")
    if getattr(args, "mfd", None) is not None:
        overrides.append(f"ivt.min_fixation_duration_s={args.mfd}")
    if getattr(args, "seeds", None) is not None:
        overrides.append(f"seeds={args.seeds}")
    if getattr(args, "order", None) is not None:
        overrides.append(f"derivative_order={args.order}")
    return ExperimentConfig.model_validate(apply_overrides(data, overrides))


# ---------- subcommands

def cmd_convert(args: argparse.Namespace) -> int:
    if args.manifest:
        manifest = get_repository(args.manifest).manifest()
        rate, geometry, space = manifest.sample_rate_hz, manifest.geometry, manifest.coordinate_space
    else:
        if args.rate is None:
            raise UsageError("convert needs --manifest or --rate")
        rate, geometry, space = args.rate, BIOEYE_GEOMETRY, args.source
    rec = read_recording(
        Path(args.recording), sample_rate_hz=rate, participant_id="", session_label="",
        geometry=geometry, coordinate_space=space,
    )
    out = (
        GeometryService.recording_to_pixels(rec) if args.to == "pixels"
        else GeometryService.recording_to_degrees(rec)
    )
    store = get_result_store(args.output_dir)
    target = write_recording(out, store.root / f"{Path(args.recording).stem}_{args.to}.csv")
    print(f"{args.recording}: {space} -> {args.to}, {out.n_samples} samples -> {target}")
    return EXIT_OK


def cmd_segment(args: argparse.Namespace) -> int:
    if args.config:
        cfg = load_config(args)
        manifest = get_repository(cfg.manifest).manifest()
        ivt, blink, smoothing = cfg.ivt, cfg.blink, cfg.smoothing
    else:
        cfg = None
        manifest = get_repository(args.manifest).manifest() if args.manifest else None
        ivt = IvtParams(
            velocity_threshold_deg_s=args.vt if args.vt is not None else 50.0,
            min_fixation_duration_s=args.mfd if args.mfd is not None else 0.1,
        )
        blink, smoothing = BlinkParams(), SmoothingConfig()
    if manifest is None and args.rate is None:
        raise UsageError("segment needs --config, --manifest or --rate")

    rec = read_recording(
        Path(args.recording),
        sample_rate_hz=manifest.sample_rate_hz if manifest else args.rate,
        participant_id="", session_label="",
        geometry=manifest.geometry if manifest else BIOEYE_GEOMETRY,
        coordinate_space=manifest.coordinate_space if manifest else "degrees",
        has_validity=manifest.has_validity if manifest else True,
    )
    segments = ExperimentService.segment_recording(
        rec, ivt, blink, smoothing, manifest.has_validity if manifest else True,
    )
    store = get_result_store(args.output_dir)
    store.write_segments(segments, f"{Path(args.recording).stem}_segments.csv")
    store.write_config(cfg if cfg is not None else ivt)
    counts = {k: sum(s.kind == k for s in segments) for k in ("fixation", "saccade", "blink")}
    print(f"fixations={counts['fixation']} saccades={counts['saccade']} blinks={counts['blink']}")
    return EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    workers = get_workers(args.workers)
    data = ExperimentService.prepare(cfg, get_repository(cfg.manifest), workers)
    feats = data.features(cfg)
    store = get_result_store(args.output_dir)
    names = FeatureSchema.for_order(cfg.derivative_order).names
    for kind in ("fixation", "saccade"):
        store.write_features([v for f in feats for v in f.vectors(kind)], names, f"features_{kind}.csv")
    store.write_features([v for f in feats for v in f.blink], BLINK_FEATURES, "features_blink.csv")
    store.write_config(cfg)
    total = {k: sum(len(f.vectors(k)) for f in feats) for k in ("fixation", "saccade", "blink")}
    print(
        f"{len(feats)} recordings: {total['fixation']} fixations, {total['saccade']} saccades, "
        f"{total['blink']} blinks, {len(names)} features per segment"
    )
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    data = ExperimentService.prepare(cfg, get_repository(cfg.manifest), get_workers(args.workers))
    eligible, _ = ExperimentService.eligible_participants(cfg, data.entries)
    feats = data.features(cfg)
    train_idx, _ = ExperimentService.split_units(cfg, data.entries, eligible)
    models = ExperimentService.train_models(cfg, feats, train_idx, args.seed, data.manifest.has_validity)
    store = get_result_store(args.output_dir)
    summary = {}
    for kind, (model, norm) in models.items():
        path = save_model(model, store.root / "models" / f"{kind}.npz", norm)
        summary[kind] = {
            "path": str(path.relative_to(store.root)),
            "centers": int(model.centers.shape[0]),
            "features": model.n_features,
            "classes": len(model.class_labels),
        }
        print(f"{kind}: {model.centers.shape[0]} centers, {model.n_features} features -> {path}")
    store.write_json({"seed": args.seed, "models": summary}, "models.json")
    store.write_config(cfg)
    return EXIT_OK


def _evaluate(cfg: ExperimentConfig, args: argparse.Namespace):
    repo = get_repository(cfg.manifest)
    workers = get_workers(args.workers)
    if cfg.subgroup is not None:
        return ExperimentService.subgroup_resample(cfg, repo, workers=workers)
    return ExperimentService.run_experiment(cfg, repo, workers=workers)


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    report = _evaluate(cfg, args)
    store = get_result_store(args.output_dir)
    store.write_config(cfg)
    store.write_report(report)
    print(format_accuracy(report.mean_accuracy, report.sem, len(report.seeds)))
    return EXIT_OK


def cmd_tune_weights(args: argparse.Namespace) -> int:
    cfg = load_config(args).model_copy(update={"fusion": "optimize"})
    report = _evaluate(cfg, args)
    store = get_result_store(args.output_dir)
    store.write_config(cfg)
    store.write_report(report)
    w0, w = report.initial_fusion_weights, report.fusion_weights
    print("initial   w=({:.4g}, {:.4g}, {:.4g}) accuracy = {:.4f}".format(*w0.as_tuple(), report.initial_accuracy))
    print("optimized w=({:.4g}, {:.4g}, {:.4g}) ".format(*w.as_tuple())
          + format_accuracy(report.mean_accuracy, report.sem, len(report.seeds)))
    print("validation accuracy {:.4f} -> {:.4f} (training sessions only)".format(
        report.initial_validation_accuracy, report.validation_accuracy))
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    workers = get_workers(args.workers)
    data = ExperimentService.prepare(cfg, get_repository(cfg.manifest), workers)
    store = get_result_store(args.output_dir)
    store.write_config(cfg)

    if args.peak:
        plan = SweepPlan()
        _, tuned = ExperimentService.tune_vt_by_fixation_peak(
            cfg, plan.vt_range, args.neighborhood, plan.fine_step, data=data,
        )
        store.write_peak(tuned)
        print(f"peak-count VT = {tuned.peak_vt:g} deg/s, best-accuracy VT = {tuned.best_vt:g} deg/s")
        return EXIT_OK

    stages = ("vt", "mfd") if args.stage == "both" else (args.stage,)
    result = OptimizeService.sweep_ivt(
        ExperimentService.ivt_runner(cfg, data), SweepPlan(), stages,
        start_vt=cfg.ivt.velocity_threshold_deg_s, workers=workers,
    )
    store.write_sweep(result)
    print(f"{'VT':>6} {'MFD':>6} {'fixations':>10} {'accuracy':>9} {'sem':>7}")
    for r in result.rows:
        print(f"{r.vt_deg_s:6g} {r.mfd_s:6.3f} {r.fixation_count:10d} {r.accuracy_mean:9.4f} {r.accuracy_sem:7.4f}")
    b = result.best
    print(f"best: VT={b.vt_deg_s:g} MFD={b.mfd_s:.3f} " + format_accuracy(b.accuracy_mean, b.accuracy_sem, cfg.seeds))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    rows = ExperimentService.ablate_derivative_orders(
        cfg, args.orders, get_repository(cfg.manifest), workers=get_workers(args.workers),
    )
    store = get_result_store(args.output_dir)
    store.write_config(cfg)
    store.write_ablation(rows)
    print(f"{'order':>5} {'features':>8} {'accuracy':>9} {'sem':>7}")
    for r in rows:
        print(f"{r.derivative_order:5d} {r.feature_count:8d} {r.accuracy_mean:9.4f} {r.accuracy_sem:7.4f}")
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    profiles = SyntheticService.default_profiles(args.users, args.seed)
    dataset = SyntheticService.generate_synthetic(profiles, args.sessions, args.duration, args.rate, args.seed)
    store = get_result_store(args.output_dir)
    repo = CsvDatasetRepository.save(dataset, store.root)
    sessions = [f"s{k + 1}" for k in range(args.sessions)]
    if len(sessions) >= 2:
        # ready-to-run experiment: first session trains, second tests
        experiment = ExperimentConfig(
            manifest=repo.manifest_path.name,
            split=SplitConfig(kind="session", train_sessions=[sessions[0]], test_sessions=[sessions[1]]),
        )
        store.write_config(experiment, "experiment.json")
    store.write_json(
        {"users": args.users, "sessions": args.sessions, "duration_s": args.duration,
         "rate_hz": args.rate, "seed": args.seed,
         "profiles": [p.model_dump(mode="json") for p in profiles]},
        "config.json",
    )
    print(f"{len(dataset.recordings)} recordings of {args.users} users -> {repo.manifest_path}")
    return EXIT_OK


# ---------- parser

def build_parser() -> CliParser:
    common = CliParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="DEBUG logging")
    common.add_argument("--workers", type=int, default=None, help="parallel workers (default: available cores)")
    common.add_argument("--output-dir", default=None, help="output directory (default: $GAZEID_OUTPUT_DIR or ./out)")

    config = CliParser(add_help=False)
    config.add_argument("--config", required=True, help="experiment configuration JSON")
    config.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    config.add_argument("--seeds", type=int, default=None, help="number of seeds (default 50)")
    config.add_argument("--vt", type=float, default=None, help="IVT velocity threshold, deg/s")
    config.add_argument("--mfd", type=float, default=None, help="IVT minimum fixation duration, s")
    config.add_argument("--order", type=int, default=None, help="highest derivative order 0..5")

    parser = CliParser(prog="gazeid", description="Eye-movement biometric identification pipeline.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("convert", parents=[common], help="degrees <-> pixels")
    p.add_argument("recording")
    p.add_argument("--to", choices=["degrees", "pixels"], required=True)
    p.add_argument("--manifest", default=None, help="take rate, geometry and source space from a manifest")
    p.add_argument("--rate", type=float, default=None, help="sample rate, Hz")
    p.add_argument("--source", choices=["degrees", "pixels"], default="degrees", help="source space without --manifest")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("segment", parents=[common], help="IVT segmentation and blink extraction of one recording")
    p.add_argument("recording")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--manifest", default=None)
    p.add_argument("--rate", type=float, default=None)
    p.add_argument("--vt", type=float, default=None, help="deg/s (default 50)")
    p.add_argument("--mfd", type=float, default=None, help="s (default 0.1)")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("extract", parents=[common, config], help="feature matrices of the whole dataset")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common, config], help="train and save the three classifiers")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common, config], help="multi-seed identification accuracy")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common, config], help="two-stage IVT parameter sweep")
    p.add_argument("--stage", choices=["vt", "mfd", "both"], default="both")
    p.add_argument("--peak", action="store_true", help="tune VT around the fixation-count peak instead")
    p.add_argument("--neighborhood", type=int, default=3, help="grid points around the peak")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tune-weights", parents=[common, config], help="Nelder-Mead fusion weights")
    p.set_defaults(func=cmd_tune_weights)

    p = sub.add_parser("ablate", parents=[common, config], help="accuracy per derivative order")
    p.add_argument("--orders", type=int, nargs="+", default=[0, 1, 2, 3, 4, 5])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--duration", type=float, default=60.0, help="seconds per recording")
    p.add_argument("--rate", type=float, default=250.0, help="Hz")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    configure_logging(args.verbose)
    logger.debug("gazeid %s: %s", args.command, vars(args))
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"invalid configuration ({exc.error_count()} errors):", file=sys.stderr)
        for err in exc.errors():
            print(f"  {'.'.join(str(p) for p in err['loc'])}: {err['msg']}", file=sys.stderr)
        return EXIT_DATA
    except GazeIdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
