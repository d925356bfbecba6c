"""Command-line entry point.

Subcommands cover the pipeline end to end: build a poisoned dataset
(``poison``), summarize trigger survival from a manifest (``analyze``),
score detector result files (``eval``), export the dense-region training set
(``export-dense``), and regenerate a dataset under an input-space defense
(``defend``).

Attack recipes live in JSON config files rather than flags so a run's exact
recipe can be archived and echoed into the manifest. Exit codes: 0 success,
1 runtime failure, 2 command-line usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .defenses import DefenseKind, DefenseSpec, apply_defense
from .errors import MissingPrediction, SchemaError, ToolkitError
from .fusion_sim import histogram_csv, summary_report, survival_histogram
from .kitti_io import parse_labels, split_dataset
from .metrics import evaluate, load_results
from .poisoning import (
    PoisonConfig,
    default_jobs,
    export_dense_region_dataset,
    load_manifest,
    poison_dataset,
)

log = logging.getLogger("badfusion")


def _load_config(path: str | None) -> dict:
    if path is None:
        raise SchemaError("this subcommand requires --config")
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise SchemaError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError(f"config file {path} must hold a JSON object")
    return doc


def _require_root(args) -> Path:
    if args.root is None:
        raise SchemaError("no dataset root: pass --root or set BADFUSION_ROOT")
    return Path(args.root)


def _poison_config(args) -> tuple[PoisonConfig, str | None]:
    doc = _load_config(args.config)
    predictions = doc.pop("predictions", None)
    config = PoisonConfig.from_json_obj(doc)
    if args.seed is not None:
        doc["rng_seed"] = args.seed
        config = PoisonConfig.from_json_obj(doc)
    return config, predictions


def cmd_poison(args) -> int:
    root = _require_root(args)
    config, predictions = _poison_config(args)
    if args.predictions:
        predictions = args.predictions
    if config.placement_source.value == "predicted" and predictions is None:
        raise MissingPrediction(
            "placement_source=predicted needs a predictions file "
            "(config key 'predictions' or --predictions)"
        )
    index = split_dataset(root)
    manifest = poison_dataset(
        index,
        config,
        Path(args.out),
        predictions=Path(predictions) if predictions else None,
        jobs=args.jobs,
    )
    stats = survival_histogram(manifest)
    print(
        f"poisoned {len(manifest.frames)} of {manifest.train_size} train frames "
        f"({manifest.poisoned_vehicle_total} vehicles)"
    )
    print(summary_report(stats), end="")
    print(f"manifest: {Path(args.out) / 'poison_manifest.json'}")
    return 0


def cmd_analyze(args) -> int:
    manifest = load_manifest(Path(args.manifest))
    stats = survival_histogram(manifest)
    out = Path(args.out) if args.out else Path(args.manifest).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "histogram.csv").write_text(histogram_csv(stats))
    (out / "summary.txt").write_text(summary_report(stats))
    print(summary_report(stats), end="")
    print(f"wrote {out / 'histogram.csv'}")
    return 0


def cmd_eval(args) -> int:
    root = _require_root(args)
    manifest = load_manifest(Path(args.manifest))
    index = split_dataset(root)
    gt_ids = index.valid_ids or index.train_ids
    clean_gt = {}
    for fid in gt_ids:
        label_path = root / "label_2" / f"{fid}.txt"
        clean_gt[fid] = parse_labels(label_path.read_text())
    report = evaluate(
        load_results(Path(args.clean_results)),
        load_results(Path(args.poisoned_results)),
        clean_gt,
        manifest,
        iou_threshold=args.iou_threshold,
        ap_mode=args.ap_mode,
    )
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval_report.json").write_text(report.to_json())
        (out / "eval_report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_export_dense(args) -> int:
    root = _require_root(args)
    try:
        w, h = (int(p) for p in args.trigger_size.lower().split("x"))
    except ValueError as exc:
        raise SchemaError(
            f"--trigger-size expects WxH (e.g. 15x15), got {args.trigger_size!r}"
        ) from exc
    index = split_dataset(root)
    ids = {"train": index.train_ids, "val": index.valid_ids, "all": index.all_ids()}[
        args.split
    ]
    stats = export_dense_region_dataset(
        index, (w, h), Path(args.out), frame_ids=ids, jobs=args.jobs
    )
    if stats["records"] == 0:
        print("warning: no vehicles with projected points; wrote empty dataset")
    print(
        f"exported {stats['records']} regions over {stats['frames']} frames "
        f"({stats['skipped_vehicles']} vehicles had no points)"
    )
    return 0


def cmd_defend(args) -> int:
    root = _require_root(args)
    doc = _load_config(args.config)
    try:
        spec = DefenseSpec(
            kind=DefenseKind(doc["kind"]),
            noise_max=doc.get("noise_max", 0),
            jpeg_quality=doc.get("jpeg_quality", 100),
            rng_seed=args.seed if args.seed is not None else doc.get("rng_seed", 0),
        )
    except (KeyError, ValueError) as exc:
        raise SchemaError(f"bad defense config: {exc}") from exc
    n = apply_defense(root, spec, Path(args.out), jobs=args.jobs)
    print(f"defended {n} frames with {spec.kind.value}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="badfusion",
        description="Fusion-aware 2D-trigger backdoor dataset toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument(
            "--root",
            default=os.environ.get("BADFUSION_ROOT"),
            help="dataset root (default: $BADFUSION_ROOT)",
        )
        p.add_argument("--out", required=needs_out, help="output directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--jobs", type=int, default=default_jobs(), help="parallel workers")
        p.add_argument("--seed", type=int, default=None, help="override config rng_seed")
        p.add_argument("--verbose", action="store_true")

    p = sub.add_parser("poison", help="write a poisoned copy of the dataset")
    common(p)
    p.add_argument("--predictions", help="badfusion-densepred/v1 file for LiDAR-free placement")
    p.set_defaults(func=cmd_poison)

    p = sub.add_parser("analyze", help="trigger-survival histogram from a manifest")
    common(p, needs_out=False)
    p.add_argument("--manifest", required=True, help="poison_manifest.json path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("eval", help="score detector result files")
    common(p, needs_out=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--clean-results", required=True, help="results dir on clean data")
    p.add_argument("--poisoned-results", required=True, help="results dir on triggered data")
    p.add_argument("--iou-threshold", type=float, default=0.7)
    p.add_argument("--ap-mode", choices=("40pt", "11pt"), default="40pt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-dense", help="export dense-region training data")
    common(p)
    p.add_argument("--trigger-size", default="15x15", help="WxH, default 15x15")
    p.add_argument("--split", choices=("train", "val", "all"), default="train")
    p.set_defaults(func=cmd_export_dense)

    p = sub.add_parser("defend", help="re-encode images under a defense transform")
    common(p)
    p.set_defaults(func=cmd_defend)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ToolkitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
