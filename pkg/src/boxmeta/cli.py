"""Command line interface.

Subcommands: synth, extract, train, eval, sweep, corr. Every option can also
come from a key=value config file (--config); explicit flags win. All outputs
are deterministic: repeating a command with identical inputs produces
byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .dataset import (
    DEFAULT_SMOTE_K,
    extract_records,
    smote,
    split_resample,
    table_from_records,
)
from .errors import BoxmetaError, ConfigError, FormatError, SchemaError
from .evaluation import (
    FEATURE_SETS,
    accuracy,
    auroc,
    feature_correlations,
    r2,
    residual_std,
    sweep,
)
from .features import feature_set_columns
from .models import FAMILIES, TASKS, load_model, make_model, save_model
from .pipeline import DEFAULT_TAU, threshold_schedule
from .synthgen import SceneConfig, generate

MANIFEST_TAG = "boxmeta-manifest"
MANIFEST_VERSION = 1


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = _parse_with_config(parser, sys.argv[1:] if argv is None else argv)
    try:
        return args.handler(args)
    except BoxmetaError as exc:
        print(f"{exc.category}: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boxmeta",
        description=(
            "Post-processing toolkit for object detector outputs: per-box "
            "uncertainty metrics, TP/FP meta classification and IoU meta "
            "regression."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic dump and ground truth")
    synth.add_argument("--out", help="output directory")
    synth.add_argument("--images", type=int, default=SceneConfig.num_images)
    synth.add_argument("--rows", type=float, default=SceneConfig.rows)
    synth.add_argument("--cols", type=float, default=SceneConfig.cols)
    synth.add_argument("--classes", type=int, default=SceneConfig.num_classes)
    synth.add_argument("--objects-min", type=int, default=SceneConfig.objects_min)
    synth.add_argument("--objects-max", type=int, default=SceneConfig.objects_max)
    synth.add_argument("--side-min", type=float, default=SceneConfig.side_min)
    synth.add_argument("--side-max", type=float, default=SceneConfig.side_max)
    synth.add_argument("--cluster-mean", type=float, default=SceneConfig.cluster_mean)
    synth.add_argument(
        "--clutter-cluster-mean", type=float, default=SceneConfig.clutter_cluster_mean
    )
    synth.add_argument("--clutter-rate", type=float, default=SceneConfig.clutter_rate)
    synth.add_argument("--jitter", type=float, default=SceneConfig.jitter_sigma)
    synth.add_argument("--score-slope", type=float, default=SceneConfig.score_slope)
    synth.add_argument("--score-offset", type=float, default=SceneConfig.score_offset)
    synth.add_argument("--score-noise", type=float, default=SceneConfig.score_noise)
    synth.add_argument("--dropout-passes", type=int, default=SceneConfig.dropout_passes)
    synth.add_argument("--dropout-jitter", type=float, default=SceneConfig.dropout_jitter)
    synth.add_argument("--seed", type=int, default=SceneConfig.seed)
    _add_config(synth)
    synth.set_defaults(handler=_cmd_synth)

    extract = sub.add_parser("extract", help="dump + ground truth -> metric table CSV")
    extract.add_argument("--candidates", help="candidate dump CSV")
    extract.add_argument("--groundtruth", help="ground truth CSV")
    extract.add_argument("--out", help="output table CSV")
    extract.add_argument("--classes", type=int, help="expected class count (validated)")
    extract.add_argument("--threshold", type=float, default=0.1, help="score filter threshold")
    extract.add_argument("--tau", type=float, default=DEFAULT_TAU, help="NMS IoU threshold")
    extract.add_argument(
        "--dropout",
        choices=("auto", "on", "off"),
        default="auto",
        help="emit dropout metric columns (auto: when the dump has repeats)",
    )
    extract.add_argument("--jobs", type=int, default=1, help="parallel image workers")
    _add_config(extract)
    extract.set_defaults(handler=_cmd_extract)

    train = sub.add_parser("train", help="fit meta models on a metric table")
    train.add_argument("--table", help="metric table CSV")
    train.add_argument("--out", help="output directory for models and manifest")
    train.add_argument("--features", default="metadetect", help=f"one of {FEATURE_SETS}")
    train.add_argument("--models", nargs="+", default=list(FAMILIES), help="families to fit")
    train.add_argument("--tasks", nargs="+", default=list(TASKS), help="tasks to fit")
    train.add_argument("--seed", type=int, default=0, help="split/model seed")
    train.add_argument("--smote-k", type=int, default=DEFAULT_SMOTE_K)
    train.add_argument("--no-smote", action="store_true", help="disable SMOTE balancing")
    _add_config(train)
    train.set_defaults(handler=_cmd_train)

    evaluate = sub.add_parser("eval", help="score trained models on a metric table")
    evaluate.add_argument("--table", help="metric table CSV")
    evaluate.add_argument("--models-dir", help="directory written by train")
    evaluate.add_argument("--out", help="output report CSV")
    evaluate.add_argument(
        "--split",
        choices=("validation", "train"),
        default="validation",
        help="which half of the manifest split to score",
    )
    evaluate.add_argument(
        "--allow-train-eval",
        action="store_true",
        help="permit scoring the training half",
    )
    _add_config(evaluate)
    evaluate.set_defaults(handler=_cmd_eval)

    sweep_cmd = sub.add_parser("sweep", help="benchmark across a threshold schedule")
    sweep_cmd.add_argument("--candidates", help="candidate dump CSV")
    sweep_cmd.add_argument("--groundtruth", help="ground truth CSV")
    sweep_cmd.add_argument("--out", help="output directory")
    sweep_cmd.add_argument("--schedule", choices=("linear", "log"), help="threshold schedule")
    sweep_cmd.add_argument("--thresholds", help="explicit comma-separated thresholds")
    sweep_cmd.add_argument("--features", nargs="+", default=["baseline", "metadetect"])
    sweep_cmd.add_argument("--models", nargs="+", default=["gb"])
    sweep_cmd.add_argument("--tasks", nargs="+", default=list(TASKS))
    sweep_cmd.add_argument("--runs", type=int, default=10)
    sweep_cmd.add_argument("--seed", type=int, default=0)
    sweep_cmd.add_argument("--tau", type=float, default=DEFAULT_TAU)
    sweep_cmd.add_argument("--classes", type=int, help="expected class count (validated)")
    sweep_cmd.add_argument("--smote-k", type=int, default=DEFAULT_SMOTE_K)
    sweep_cmd.add_argument("--no-smote", action="store_true")
    sweep_cmd.add_argument(
        "--scatter", action="store_true", help="write per-box regression scatter files"
    )
    sweep_cmd.add_argument("--jobs", type=int, default=1, help="parallel threshold workers")
    _add_config(sweep_cmd)
    sweep_cmd.set_defaults(handler=_cmd_sweep)

    corr = sub.add_parser("corr", help="rank features by correlation with true IoU")
    corr.add_argument("--table", help="metric table CSV")
    corr.add_argument("--out", help="output CSV")
    _add_config(corr)
    corr.set_defaults(handler=_cmd_corr)

    return parser


def _add_config(subparser: argparse.ArgumentParser) -> None:
    subparser.add_argument("--config", help="key=value config file; flags win")


def _parse_with_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Apply --config entries as subcommand defaults, then parse normally."""
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    if config_path is not None and argv:
        subparser = _find_subparser(parser, argv[0])
        if subparser is not None:
            _apply_config_file(subparser, config_path)
    return parser.parse_args(argv)


def _find_subparser(parser, command: str):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices.get(command)
    return None


def _apply_config_file(subparser: argparse.ArgumentParser, path: str) -> None:
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise SystemExit(f"config-error: cannot read config file {path}: {exc}")
    entries: dict[str, str] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise SystemExit(f"config-error: {path}:{line_no}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        entries[key.strip().replace("-", "_")] = value.strip()
    defaults: dict[str, object] = {}
    for action in subparser._actions:
        if action.dest not in entries:
            continue
        raw = entries.pop(action.dest)
        if isinstance(action, argparse._StoreTrueAction):
            defaults[action.dest] = raw.lower() in ("1", "true", "yes", "on")
        elif action.nargs in ("+", "*"):
            parts = [p for p in raw.replace(",", " ").split() if p]
            defaults[action.dest] = [action.type(p) if action.type else p for p in parts]
        else:
            try:
                defaults[action.dest] = action.type(raw) if action.type else raw
            except ValueError:
                raise SystemExit(
                    f"config-error: {path}: bad value for {action.dest}: {raw!r}"
                ) from None
    if entries:
        raise SystemExit(f"config-error: {path}: unknown keys: {', '.join(sorted(entries))}")
    subparser.set_defaults(**defaults)


def _require(args: argparse.Namespace, dest: str):
    value = getattr(args, dest)
    if value is None:
        raise ConfigError(f"missing required option --{dest.replace('_', '-')}")
    return value


def _check_choices(values, allowed, what: str) -> tuple[str, ...]:
    for value in values:
        if value not in allowed:
            raise ConfigError(f"unknown {what} {value!r}; expected one of {tuple(allowed)}")
    return tuple(dict.fromkeys(values))


def _cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(_require(args, "out"))
    config = SceneConfig(
        num_images=args.images,
        rows=args.rows,
        cols=args.cols,
        num_classes=args.classes,
        objects_min=args.objects_min,
        objects_max=args.objects_max,
        side_min=args.side_min,
        side_max=args.side_max,
        cluster_mean=args.cluster_mean,
        clutter_cluster_mean=args.clutter_cluster_mean,
        clutter_rate=args.clutter_rate,
        jitter_sigma=args.jitter,
        score_slope=args.score_slope,
        score_offset=args.score_offset,
        score_noise=args.score_noise,
        dropout_passes=args.dropout_passes,
        dropout_jitter=args.dropout_jitter,
        seed=args.seed,
    )
    gts_by_image, candidates_by_image = generate(config)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_candidates(out_dir / "candidates.csv", candidates_by_image, config.num_classes)
    io.write_groundtruth(out_dir / "groundtruth.csv", gts_by_image)
    n_cand = sum(len(v) for v in candidates_by_image.values())
    n_gt = sum(len(v) for v in gts_by_image.values())
    print(
        f"wrote {out_dir / 'candidates.csv'} ({n_cand} candidates) and "
        f"{out_dir / 'groundtruth.csv'} ({n_gt} objects) for {config.num_images} images"
    )
    return 0


def _resolve_dropout(mode: str, candidates_by_image) -> bool:
    if mode == "on":
        return True
    if mode == "off":
        return False
    return any(
        c.dropout_run > 0 for candidates in candidates_by_image.values() for c in candidates
    )


def _cmd_extract(args: argparse.Namespace) -> int:
    candidates_by_image, num_classes = io.read_candidates(_require(args, "candidates"))
    if args.classes is not None and args.classes != num_classes:
        raise SchemaError(
            f"--classes {args.classes} does not match the dump ({num_classes} classes)"
        )
    gts_by_image = io.read_groundtruth(_require(args, "groundtruth"), num_classes)
    if not 0.0 <= args.threshold <= 1.0:
        raise ConfigError(f"--threshold must lie in [0, 1], got {args.threshold}")
    if not 0.0 < args.tau <= 1.0:
        raise ConfigError(f"--tau must lie in (0, 1], got {args.tau}")
    dropout = _resolve_dropout(args.dropout, candidates_by_image)
    records = extract_records(
        candidates_by_image, args.threshold, args.tau, jobs=args.jobs
    )
    table = table_from_records(records, gts_by_image, num_classes, dropout)
    out = Path(_require(args, "out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_table(out, table)
    print(
        f"wrote {out}: {len(table)} survivors, {len(table.feature_names)} metrics, "
        f"dropout {'on' if dropout else 'off'}"
    )
    return 0


def _smote_if_needed(table, enabled: bool, k: int, seed: int):
    if not enabled:
        return table
    n_pos = int(table.is_tp.sum())
    if n_pos == 0 or n_pos == len(table) or 2 * n_pos == len(table):
        return table
    return smote(table, k=k, seed=seed)


def _cmd_train(args: argparse.Namespace) -> int:
    table = io.read_table(_require(args, "table"))
    feature_set = args.features
    if isinstance(feature_set, list):
        if len(feature_set) != 1:
            raise ConfigError("train fits exactly one feature set; pass a single --features")
        feature_set = feature_set[0]
    if feature_set not in FEATURE_SETS:
        raise ConfigError(f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}")
    if feature_set == "metadetect-dropout" and not table.dropout_enabled:
        raise ConfigError("table has no dropout columns; re-extract with --dropout on")
    families = _check_choices(args.models, FAMILIES, "model family")
    tasks = _check_choices(args.tasks, TASKS, "task")
    columns = feature_set_columns(feature_set, table.num_classes)
    train_half, _ = split_resample(table, args.seed)

    out_dir = Path(_require(args, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    model_files: list[str] = []
    hyperparameters: dict[str, dict] = {}
    for family in families:
        for task in tasks:
            fit_table = train_half
            if task == "classification":
                fit_table = _smote_if_needed(
                    train_half, not args.no_smote, args.smote_k, args.seed
                )
                y = fit_table.is_tp.astype(float)
            else:
                y = fit_table.true_iou
            model = make_model(family, task, seed=args.seed)
            model.fit(fit_table.columns(columns), y, feature_names=columns)
            name = f"model_{family}_{task}.json"
            save_model(
                model,
                out_dir / name,
                metadata={"feature_set": feature_set, "split_seed": args.seed},
            )
            model_files.append(name)
            params = model.get_params()
            hyperparameters[family] = {
                k: list(v) if isinstance(v, tuple) else v for k, v in params.items()
            }
    manifest = {
        "format": MANIFEST_TAG,
        "version": MANIFEST_VERSION,
        "seed": args.seed,
        "feature_set": feature_set,
        "families": list(families),
        "tasks": list(tasks),
        "smote": {"enabled": not args.no_smote, "k": args.smote_k},
        "table": {
            "rows": len(table),
            "num_classes": table.num_classes,
            "dropout": table.dropout_enabled,
        },
        "models": model_files,
        "hyperparameters": hyperparameters,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    print(f"wrote {len(model_files)} model(s) and manifest to {out_dir}")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    models_dir = Path(_require(args, "models_dir"))
    manifest_path = models_dir / "manifest.json"
    if not manifest_path.exists():
        raise FormatError(f"no manifest.json in {models_dir}")
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    if manifest.get("format") != MANIFEST_TAG or manifest.get("version") != MANIFEST_VERSION:
        raise FormatError(f"{manifest_path}: not a {MANIFEST_TAG} v{MANIFEST_VERSION} file")

    table = io.read_table(_require(args, "table"))
    if len(table) != manifest["table"]["rows"]:
        raise SchemaError(
            f"table has {len(table)} rows but the manifest split expects "
            f"{manifest['table']['rows']}; evaluate on the table used for training"
        )
    if args.split == "train" and not args.allow_train_eval:
        raise ConfigError(
            "refusing to evaluate on the training half; pass --allow-train-eval to override"
        )
    train_half, val_half = split_resample(table, manifest["seed"])
    half = train_half if args.split == "train" else val_half

    rows: list[tuple[str, str, str, float]] = []
    for name in manifest["models"]:
        model, metadata = load_model(models_dir / name)
        columns = model.feature_names_in_
        predictions = model.predict(half.columns(columns))
        feature_set = metadata.get("feature_set", "unknown")
        if model.task == "classification":
            rows.append((model.family, feature_set, "accuracy", accuracy(half.is_tp, predictions)))
            rows.append((model.family, feature_set, "auroc", auroc(half.is_tp, predictions)))
        else:
            rows.append((model.family, feature_set, "r2", r2(half.true_iou, predictions)))
            rows.append(
                (model.family, feature_set, "residual_std", residual_std(half.true_iou, predictions))
            )
    out = Path(_require(args, "out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_eval_report(out, rows)
    print(f"wrote {out}: {len(rows)} metric rows on the {args.split} half")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    candidates_by_image, num_classes = io.read_candidates(_require(args, "candidates"))
    if args.classes is not None and args.classes != num_classes:
        raise SchemaError(
            f"--classes {args.classes} does not match the dump ({num_classes} classes)"
        )
    gts_by_image = io.read_groundtruth(_require(args, "groundtruth"), num_classes)
    if args.schedule is not None and args.thresholds is not None:
        raise ConfigError("pass either --schedule or --thresholds, not both")
    if args.thresholds is not None:
        try:
            schedule = [float(part) for part in args.thresholds.split(",") if part.strip()]
        except ValueError as exc:
            raise ConfigError(f"bad --thresholds value: {args.thresholds!r}") from exc
        if not schedule:
            raise ConfigError("--thresholds is empty")
    else:
        schedule = threshold_schedule(args.schedule or "linear")
    for t in schedule:
        if not 0.0 <= t <= 1.0:
            raise ConfigError(f"threshold {t} outside [0, 1]")
    feature_sets = _check_choices(args.features, FEATURE_SETS, "feature set")
    families = _check_choices(args.models, FAMILIES, "model family")
    tasks = _check_choices(args.tasks, TASKS, "task")
    has_dropout = any(
        c.dropout_run > 0 for candidates in candidates_by_image.values() for c in candidates
    )
    if "metadetect-dropout" in feature_sets and not has_dropout:
        print(
            "note: dump has no dropout repeats; metadetect-dropout statistics "
            "collapse to the survivor values",
            file=sys.stderr,
        )

    report = sweep(
        candidates_by_image,
        gts_by_image,
        schedule=schedule,
        num_classes=num_classes,
        families=families,
        feature_sets=feature_sets,
        tasks=tasks,
        runs=args.runs,
        base_seed=args.seed,
        tau=args.tau,
        smote_enabled=not args.no_smote,
        smote_k=args.smote_k,
        collect_scatter=args.scatter,
        jobs=args.jobs,
    )
    out_dir = Path(_require(args, "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_sweep_csv(out_dir / "report.csv", report)
    with open(out_dir / "report.txt", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(io.sweep_text_tables(report))
    io.write_map_csv(out_dir / "map.csv", report)
    io.write_warnings(out_dir / "warnings.txt", report)
    for (threshold, family, feature_set), (true_iou, predicted) in sorted(
        report.scatter.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])
    ):
        name = f"scatter_{family}_{feature_set}_t{threshold:g}.csv"
        io.write_scatter(out_dir / name, true_iou, predicted)
    print(
        f"wrote {out_dir}: {len(report.cells)} cells over {len(schedule)} thresholds, "
        f"{len(report.warnings)} warning(s)"
    )
    return 0


def _cmd_corr(args: argparse.Namespace) -> int:
    table = io.read_table(_require(args, "table"))
    rows = feature_correlations(table)
    out = Path(_require(args, "out"))
    out.parent.mkdir(parents=True, exist_ok=True)
    io.write_correlations(out, rows)
    print(f"wrote {out}: {len(rows)} features ranked by |r|")
    return 0


if __name__ == "__main__":
    sys.exit(main())
