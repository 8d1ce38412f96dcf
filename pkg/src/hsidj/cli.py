"""Command-line front end: synth, split, audit, eval, map, bench.

Exit codes: 0 success, 1 validation or audit failure, 2 usage error,
3 file I/O or format error. Every run prints its effective configuration
before doing work, so logs are self-describing.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import audit as audit_mod
from . import evaluate as eval_mod
from . import ingest, mapgen, splitting
from .core import (
    ConfigError,
    FormatError,
    GroundTruth,
    HSICube,
    PatchSpec,
    SplitConfig,
    ValidationError,
)
from .patching import measure_stream_memory

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _ratio(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"ratio must be strictly between 0 and 1, got {value}")
    return value


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"fraction must be in (0, 1], got {value}")
    return value


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _default_threads() -> int:
    env = os.environ.get("HSIDJ_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"HSIDJ_THREADS must be an integer, got {env!r}")
        if value < 1:
            raise ConfigError(f"HSIDJ_THREADS must be >= 1, got {value}")
        return value
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsidj",
        description="Disjoint-split tooling for hyperspectral scene classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled scene")
    p.add_argument("--rows", type=_positive, default=64)
    p.add_argument("--cols", type=_positive, default=64)
    p.add_argument("--bands", type=_positive, default=16)
    p.add_argument("--classes", type=_positive, default=5)
    p.add_argument("--blobs", type=_positive, default=12)
    p.add_argument("--separation", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--border", type=_positive, default=1)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out-hdr", required=True, help="ENVI header path for the cube")
    p.add_argument("--out-raw", default=None,
                   help="raw payload path; defaults to the header stem plus .raw")
    p.add_argument("--interleave", choices=ingest.INTERLEAVES, default="bip")
    p.add_argument("--out-gt", required=True, help="PGM path for the ground truth")

    p = sub.add_parser("split", help="build a seeded disjoint train/val/test split")
    p.add_argument("--gt", required=True)
    p.add_argument("--test-ratio", type=_ratio, default=0.7)
    p.add_argument("--val-ratio", type=_ratio, default=0.5)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--out", required=True, help="split JSON path")

    p = sub.add_parser("audit", help="verify a split and measure window overlap")
    p.add_argument("--gt", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--window", type=_positive, default=8)
    p.add_argument("--top-k", type=_positive, default=10)
    p.add_argument("--out", help="optional JSON report path")

    p = sub.add_parser("eval", help="fit a model on the train set and run the protocol")
    p.add_argument("--hdr", required=True, help="ENVI header of the cube")
    p.add_argument("--raw", default=None,
                   help="raw payload; defaults to a sibling of the header")
    p.add_argument("--gt", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--model", choices=("centroid", "knn", "softmax"), default="centroid")
    p.add_argument(
        "--features", choices=eval_mod.FEATURE_KINDS, default=None,
        help="default: patch for knn, spectrum otherwise",
    )
    p.add_argument("--window", type=_positive, default=8)
    p.add_argument("--k", type=_positive, default=1, help="neighbors for knn")
    p.add_argument("--epochs", type=_positive, default=200)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--threads", type=_positive, default=None,
                   help="prediction chunks; defaults to HSIDJ_THREADS, else all cores")
    p.add_argument("--allow-overlap", action="store_true",
                   help="skip the audit gate and add a training-reuse evaluation")
    p.add_argument("--reuse-fraction", type=_fraction, default=0.5)
    p.add_argument("--out", help="JSON report path")
    p.add_argument("--pred-out", help="CSV of index,label predictions over labeled pixels")
    p.add_argument("--predict-scene", action="store_true",
                   help="extend --pred-out to every pixel, background included")
    p.add_argument("--curve-out", help="CSV of the softmax training curve")

    p = sub.add_parser("map", help="render a thematic map to PPM")
    p.add_argument("--gt", required=True)
    p.add_argument("--split", help="needed for val_only / test_only modes")
    p.add_argument("--mode", choices=mapgen.MAP_MODES, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pred", help="CSV of index,label predictions")
    src.add_argument("--from-gt", action="store_true", help="render the ground truth itself")
    p.add_argument("--out", required=True, help="PPM output path")
    p.add_argument("--palette-out", help="optional CSV dump of the palette")

    p = sub.add_parser("bench", help="measure streaming patch extraction memory")
    p.add_argument("--rows", type=_positive, default=512)
    p.add_argument("--cols", type=_positive, default=512)
    p.add_argument("--bands", type=_positive, default=64)
    p.add_argument("--window", type=_positive, default=8)
    p.add_argument("--classes", type=_positive, default=5)
    p.add_argument("--seed", type=_seed, required=True)
    p.add_argument("--max-mib", type=float, default=None,
                   help="fail (exit 1) if peak extra allocation exceeds this")
    return parser


def _print_config(args: argparse.Namespace) -> None:
    shown = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    print(f"config[{args.command}]: {json.dumps(shown, sort_keys=True)}")


def _raw_for(header_path: str, raw: str | None) -> str:
    if raw is not None:
        return raw
    stem, _ = os.path.splitext(header_path)
    return stem + ".raw"


def _load_gt(path: str) -> GroundTruth:
    return ingest.read_gt(path)


def _load_cube(header_path: str, raw: str | None) -> HSICube:
    return ingest.read_envi(header_path, ingest.sibling_raw(header_path) if raw is None else raw)


def _write_pred_csv(path: str, predictions: dict[int, int]) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("index,label\n")
        for idx in sorted(predictions):
            fh.write(f"{idx},{predictions[idx]}\n")


def _read_pred_csv(path: str) -> dict[int, int]:
    predictions: dict[int, int] = {}
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "index,label":
            raise FormatError(f"{path}: expected header 'index,label', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'index,label', got {line!r}")
            try:
                idx, label = int(parts[0]), int(parts[1])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-integer field in {line!r}")
            if idx in predictions:
                raise FormatError(f"{path}:{lineno}: duplicate index {idx}")
            predictions[idx] = label
    return predictions


def _cmd_synth(args: argparse.Namespace) -> int:
    cfg = ingest.SynthConfig(
        rows=args.rows, cols=args.cols, bands=args.bands,
        num_classes=args.classes, blob_count=args.blobs,
        class_separation=args.separation, noise_sigma=args.noise,
        seed=args.seed, border=args.border,
    )
    cube, gt = ingest.synth_dataset(cfg)
    raw = _raw_for(args.out_hdr, args.out_raw)
    ingest.write_envi(cube, args.out_hdr, raw, interleave=args.interleave)
    ingest.write_gt(gt, args.out_gt)
    hist = splitting.class_histogram(gt)
    print(f"wrote cube {cube.rows}x{cube.cols}x{cube.bands} to {args.out_hdr} + {raw}")
    print(f"wrote ground truth to {args.out_gt}; class counts: {hist}")
    return EXIT_OK


def _cmd_split(args: argparse.Namespace) -> int:
    gt = _load_gt(args.gt)
    cfg = SplitConfig(test_ratio=args.test_ratio, val_ratio=args.val_ratio, seed=args.seed)
    s = splitting.disjoint_split(gt, cfg)
    splitting.save_splits(s, args.out)
    for c in s.classes:
        print(f"class {c.label}: train={len(c.train)} val={len(c.val)} test={len(c.test)}")
    print(f"wrote split to {args.out} (fingerprint {s.gt_fingerprint})")
    return EXIT_OK


def _leakage_dict(rep: audit_mod.LeakageReport) -> dict:
    def stats(s: audit_mod.OverlapStats) -> dict:
        return {
            "eval_total": s.eval_total,
            "overlapping": s.overlapping,
            "fraction": s.fraction,
            "mean_shared_fraction": s.mean_shared_fraction,
            "worst": [list(t) for t in s.worst],
        }

    return {
        "window": rep.window,
        "index_disjoint": list(rep.index_disjoint),
        "union_complete": rep.union_complete,
        "counts_match": rep.counts_match,
        "test_vs_train": stats(rep.test_vs_train),
        "val_vs_train": stats(rep.val_vs_train),
    }


def _cmd_audit(args: argparse.Namespace) -> int:
    gt = _load_gt(args.gt)
    s = splitting.load_splits(args.split, gt=gt)
    check = audit_mod.verify_disjoint(s, gt)
    spec = PatchSpec(window=args.window)
    leak = audit_mod.leakage_report(s, spec, gt=gt, top_k=args.top_k)

    if check.passed:
        print("index audit: PASS (sets disjoint, cover complete, labels and counts consistent)")
    else:
        print(f"index audit: FAIL ({len(check.violations)} violations)")
        for v in check.violations:
            print(f"  - {v}")
    for name, st in (("test", leak.test_vs_train), ("val", leak.val_vs_train)):
        print(
            f"window {leak.window} {name}-vs-train overlap: "
            f"{st.overlapping}/{st.eval_total} patches ({100.0 * st.fraction:.2f}%), "
            f"mean shared-pixel fraction {st.mean_shared_fraction:.4f}"
        )
    if args.out:
        payload = {
            "passed": check.passed,
            "violations": check.violations,
            "leakage": _leakage_dict(leak),
        }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"wrote audit report to {args.out}")
    return EXIT_OK if check.passed else EXIT_VALIDATION


def _fit_model(args: argparse.Namespace, cube, gt, s, spec, kind: str):
    train = s.train_indices()
    x = eval_mod.features_for(cube, gt, train, kind, spec)
    y = eval_mod.labels_at(gt, train)
    curve = None
    if args.model == "centroid":
        model = eval_mod.fit_centroid(x, y, kind)
    elif args.model == "knn":
        model = eval_mod.fit_knn(x, y, args.k, kind)
    else:
        val = s.val_indices()
        xv = eval_mod.features_for(cube, gt, val, kind, spec)
        yv = eval_mod.labels_at(gt, val)
        model, curve = eval_mod.train_softmax(
            x, y, xv, yv,
            epochs=args.epochs, learning_rate=args.lr, l2=args.l2,
            seed=args.seed, feature_kind=kind,
        )
    return model, curve


def _cmd_eval(args: argparse.Namespace) -> int:
    cube = _load_cube(args.hdr, args.raw)
    gt = _load_gt(args.gt)
    if not gt.matches(cube):
        raise ValidationError(
            f"ground truth is {gt.rows}x{gt.cols} but the cube is {cube.rows}x{cube.cols}"
        )
    s = splitting.load_splits(args.split, gt=gt)
    spec = PatchSpec(window=args.window)
    threads = args.threads if args.threads is not None else _default_threads()

    check = audit_mod.verify_disjoint(s, gt)
    if not check.passed and not args.allow_overlap:
        print(f"audit gate: FAIL ({len(check.violations)} violations); no evaluation run")
        for v in check.violations:
            print(f"  - {v}")
        return EXIT_VALIDATION

    kind = args.features or ("patch" if args.model == "knn" else "spectrum")
    model, curve = _fit_model(args, cube, gt, s, spec, kind)
    reports = eval_mod.evaluate_protocol(model, cube, gt, s, spec, threads=threads)
    overlap = None
    if args.allow_overlap:
        overlap = eval_mod.evaluate_with_training_reuse(
            model, cube, gt, s, spec, args.reuse_fraction, args.seed, threads=threads,
        )

    shown = reports.as_list() + ([overlap.report] if overlap else [])
    print(eval_mod.format_report_table(shown))
    if overlap:
        print(
            f"training reuse: {overlap.reused_count} pixels appended; "
            f"reused OA {overlap.reused_oa:.2f}, honest test OA {overlap.honest.metrics.oa:.2f}, "
            f"mixed OA {overlap.report.metrics.oa:.2f}"
        )

    if args.out:
        payload = {
            "model": args.model,
            "features": kind,
            "window": args.window,
            "seed": args.seed,
            "threads": threads,
            "split": {
                "seed": s.seed,
                "test_ratio": s.test_ratio,
                "val_ratio": s.val_ratio,
                "gt_fingerprint": s.gt_fingerprint,
            },
            "reports": [eval_mod.report_to_dict(r) for r in reports.as_list()],
        }
        if overlap:
            payload["overlap"] = {
                "report": eval_mod.report_to_dict(overlap.report),
                "reused_count": overlap.reused_count,
                "reused_oa": overlap.reused_oa,
                "fresh_oa": overlap.fresh_oa,
                "reuse_fraction": args.reuse_fraction,
            }
        Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        print(f"wrote report to {args.out}")

    if args.pred_out:
        indices = (
            list(range(gt.labels.size)) if args.predict_scene
            else np.flatnonzero(gt.labels.ravel()).tolist()
        )
        preds = eval_mod.predict_indices(model, cube, gt, indices, spec, threads=threads)
        _write_pred_csv(args.pred_out, dict(zip(indices, (int(p) for p in preds))))
        print(f"wrote {len(indices)} predictions to {args.pred_out}")

    if args.curve_out:
        if curve is None:
            raise ConfigError("--curve-out applies to the softmax model only")
        Path(args.curve_out).write_text(eval_mod.curve_csv(curve))
        print(f"wrote training curve to {args.curve_out}")
    return EXIT_OK


def _cmd_map(args: argparse.Namespace) -> int:
    gt = _load_gt(args.gt)
    s = splitting.load_splits(args.split, gt=gt) if args.split else None
    if args.from_gt:
        predictions = mapgen.truth_predictions(gt, include_background=args.mode == "full_scene")
    else:
        predictions = _read_pred_csv(args.pred)
    tmap = mapgen.render(gt, s, predictions, args.mode)
    mapgen.write_ppm(tmap, args.out)
    painted = int(np.count_nonzero(tmap.indices))
    print(f"wrote {args.mode} map to {args.out} ({painted} painted pixels)")
    if args.palette_out:
        Path(args.palette_out).write_text(mapgen.palette_csv())
        print(f"wrote palette to {args.palette_out}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = ingest.SynthConfig(
        rows=args.rows, cols=args.cols, bands=args.bands,
        num_classes=args.classes, blob_count=max(args.classes, 8),
        class_separation=3.0, noise_sigma=1.0, seed=args.seed,
    )
    cube, gt = ingest.synth_dataset(cfg)
    result = measure_stream_memory(cube, gt, PatchSpec(window=args.window))
    print(
        f"streamed {result.patches} patches of window {args.window} over "
        f"{args.rows}x{args.cols}x{args.bands}: peak extra {result.peak_extra_mib:.2f} MiB "
        f"in {result.seconds:.2f}s"
    )
    if args.max_mib is not None and result.peak_extra_mib > args.max_mib:
        print(f"bench: FAIL (peak {result.peak_extra_mib:.2f} MiB > limit {args.max_mib} MiB)")
        return EXIT_VALIDATION
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "split": _cmd_split,
    "audit": _cmd_audit,
    "eval": _cmd_eval,
    "map": _cmd_map,
    "bench": _cmd_bench,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    _print_config(args)
    try:
        return _COMMANDS[args.command](args)
    except eval_mod.DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValidationError as exc:  # ConfigError, split corruption, audit failures
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
