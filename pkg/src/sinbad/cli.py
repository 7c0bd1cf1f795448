"""Command-line entry point: fit, score, eval, ablate, convert.

Configuration comes from a key = value config file plus flag overrides (flags
win). Exit codes: 0 success, 2 configuration error, 3 data error. Output
files are written atomically (temp file + rename) and every CSV embeds the
config snapshot as '#'-prefixed header lines.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .config import ConfigError, config_snapshot, load_config
from .experiment import (
    DataError,
    _atomic_write_bytes,
    fit_bundle,
    one_vs_rest_auc,
    run_ablation_cfg,
    run_eval,
    score_with_bundle,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--jobs", type=int, help="worker parallelism for crop runs")
    parser.add_argument("--projections", type=int, help="number of random projections")
    parser.add_argument("--bins", type=int, help="histogram bins per projection")
    parser.add_argument("--tau", type=int, help="window length (timeseries)")
    parser.add_argument("--levels", type=int, help="pyramid levels (timeseries)")
    parser.add_argument("--k", type=int, help="nearest neighbours")
    parser.add_argument("--shrinkage", type=float, help="covariance shrinkage in [0, 1]")
    parser.add_argument("--crop-ratios", help="comma-separated crop ratios (image)")
    parser.add_argument("--stride", type=float, help="crop centre stride (image)")
    parser.add_argument("--weights", help="comma-separated level fusion weights (image)")
    parser.add_argument("--edge-mode", choices=("uniform", "quantile"), help="bin edge fitting mode")
    parser.add_argument("--pipeline", choices=("timeseries", "image", "sets"))
    parser.add_argument("--dataset", choices=("manifest", "synthetic", "equal_mean"))
    parser.add_argument("--manifest", help="dataset manifest path")
    parser.add_argument("--data-dir", help="root for manifest file entries "
                                           "(falls back to $SINBAD_DATA_DIR)")


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}")


def _config_from_args(args) -> "ExperimentConfig":
    overrides = {
        "seed": args.seed,
        "jobs": args.jobs,
        "projections": args.projections,
        "bins": args.bins,
        "tau": args.tau,
        "levels": args.levels,
        "k": args.k,
        "shrinkage": args.shrinkage,
        "stride": args.stride,
        "edge_mode": args.edge_mode,
        "pipeline": args.pipeline,
        "dataset": args.dataset,
        "manifest": args.manifest,
        "data_dir": args.data_dir,
    }
    if args.crop_ratios is not None:
        overrides["crop_ratios"] = _parse_float_list(args.crop_ratios)
    if args.weights is not None:
        overrides["weights"] = _parse_float_list(args.weights)
    return load_config(args.config, overrides)


def _write_scores_csv(path: Path, snapshot: str, sample_ids, per_level, fused) -> None:
    buf = io.StringIO()
    for line in snapshot.strip().splitlines():
        buf.write(f"# {line}\n")
    writer = csv.writer(buf)
    level_tags = list(per_level)
    if len(level_tags) > 1:
        writer.writerow(["sample_id", *level_tags, "score"])
        for i, sid in enumerate(sample_ids):
            writer.writerow([sid, *(repr(float(per_level[t][i])) for t in level_tags),
                             repr(float(fused[i]))])
    else:
        writer.writerow(["sample_id", "score"])
        for i, sid in enumerate(sample_ids):
            writer.writerow([sid, repr(float(fused[i]))])
    _atomic_write_bytes(path, buf.getvalue().encode())


def cmd_fit(args) -> int:
    cfg = _config_from_args(args)
    out = fit_bundle(cfg, args.out)
    print(f"fitted model bundle: {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    cfg = _config_from_args(args)
    sample_ids, per_level, fused = score_with_bundle(args.model, cfg)
    out = Path(args.out)
    _write_scores_csv(out, config_snapshot(cfg), sample_ids, per_level, fused)
    print(f"wrote {len(sample_ids)} scores: {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .evaluation import write_report

    cfg = _config_from_args(args)
    report = run_eval(cfg)
    written = write_report(report, args.out, figures=not args.no_figures)
    for row in report.rows:
        name = row.variant if not row.value else f"{row.variant}[{row.param}={row.value}]"
        print(f"{name}: {row.metric} = {row.score:.4f}")
    print(f"report files: {', '.join(str(p) for p in written)}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    from .evaluation import write_report

    cfg = _config_from_args(args)
    sweep = _parse_float_list(args.sweep) if args.sweep else None
    if sweep is not None:
        sweep = [int(v) for v in sweep]
    report = run_ablation_cfg(cfg, args.variant, sweep)
    written = write_report(report, args.out, figures=not args.no_figures)
    for row in report.rows:
        name = row.variant if not row.value else f"{row.variant}[{row.param}={row.value}]"
        print(f"{name}: {row.metric} = {row.score:.4f}")
    print(f"report files: {', '.join(str(p) for p in written)}")
    return EXIT_OK


def cmd_uea(args) -> int:
    if args.dataset is None and args.manifest is None:
        args.dataset = "synthetic"  # hyperparameters only; uea reads the .ts files directly
    cfg = _config_from_args(args)
    mean_auc, per_class = one_vs_rest_auc(args.train, args.test, cfg)
    for cls, auc in per_class.items():
        print(f"class {cls}: roc_auc = {auc:.4f}")
    print(f"mean roc_auc = {mean_auc:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert


def _convert_ts(args) -> int:
    from . import manifest as manifest_mod
    from .timeseries import read_ts_file

    outdir = Path(args.out)
    (outdir / "series").mkdir(parents=True, exist_ok=True)
    min_len = args.min_length or None
    max_len = args.max_length or None
    samples = []

    def dump(series_list, labels, split):
        for s, label in zip(series_list, labels):
            rel = f"series/{s.sample_id}.csv"
            rows = "\n".join(",".join(repr(float(v)) for v in row) for row in s.values)
            _atomic_write_bytes(outdir / rel, (rows + "\n").encode())
            if args.normal_class:
                lab = 0 if label == args.normal_class else 1
            else:
                lab = None
            samples.append(manifest_mod.ManifestSample(s.sample_id, split, lab, {"series": rel}))

    train_series, train_labels = read_ts_file(args.train, min_len, max_len)
    if args.normal_class:
        keep = [(s, l) for s, l in zip(train_series, train_labels) if l == args.normal_class]
        if not keep:
            raise DataError(f"no training series with class {args.normal_class!r}")
        train_series, train_labels = [s for s, _ in keep], [l for _, l in keep]
    dump(train_series, train_labels, manifest_mod.TRAIN)
    if args.test:
        test_series, test_labels = read_ts_file(args.test, min_len, max_len)
        dump(test_series, test_labels, manifest_mod.TEST)
    manifest_mod.save_manifest(samples, outdir / "manifest.json")
    print(f"wrote {len(samples)} samples: {outdir / 'manifest.json'}")
    return EXIT_OK


def _convert_synthetic(args) -> int:
    from . import manifest as manifest_mod
    from .benchmark import cluster_benchmark

    outdir = Path(args.out)
    (outdir / "elements").mkdir(parents=True, exist_ok=True)
    data = cluster_benchmark(args.seed or 0, n_train=args.n_train,
                             n_test_normal=args.n_test, n_test_anomalous=args.n_test)
    samples = []

    def dump(esets, labels, split):
        for eset, label in zip(esets, labels):
            rel = f"elements/{eset.sample_id}.csv"
            rows = "\n".join(",".join(repr(float(v)) for v in row) for row in eset.elements)
            _atomic_write_bytes(outdir / rel, (rows + "\n").encode())
            samples.append(manifest_mod.ManifestSample(eset.sample_id, split, label, {"elements": rel}))

    dump(data.train, [0] * len(data.train), manifest_mod.TRAIN)
    dump(data.test, data.labels.tolist(), manifest_mod.TEST)
    manifest_mod.save_manifest(samples, outdir / "manifest.json")
    print(f"wrote {len(samples)} samples: {outdir / 'manifest.json'}")
    return EXIT_OK


def _convert_setf_check(args) -> int:
    from .imagesets import parse_setf, write_setf

    failures = 0
    for name in args.files:
        path = Path(name)
        try:
            blob = path.read_bytes()
            grid = parse_setf(blob, source=str(path))
            import tempfile

            with tempfile.NamedTemporaryFile(suffix=".setf", delete=True) as tmp:
                write_setf(grid, tmp.name)
                round_tripped = Path(tmp.name).read_bytes()
            if round_tripped != blob:
                print(f"{path}: FAIL (round trip differs)")
                failures += 1
            else:
                h, w, d = grid.shape
                print(f"{path}: ok ({h}x{w}x{d})")
        except (OSError, ValueError) as exc:
            print(f"{path}: FAIL ({exc})")
            failures += 1
    if failures:
        raise DataError(f"{failures} SETF file(s) failed validation")
    return EXIT_OK


def cmd_convert(args) -> int:
    if args.convert_what == "ts":
        return _convert_ts(args)
    if args.convert_what == "synthetic":
        return _convert_synthetic(args)
    if args.convert_what == "setf-check":
        return _convert_setf_check(args)
    raise ConfigError(f"unknown convert mode {args.convert_what!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sinbad",
        description="Set-feature anomaly detection: fit, score, evaluate, ablate, convert.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model bundle on the train split")
    _add_common_flags(p)
    p.add_argument("--out", required=True, help="bundle output directory")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("score", help="score the test split with a fitted bundle")
    _add_common_flags(p)
    p.add_argument("--model", required=True, help="bundle directory from fit")
    p.add_argument("--out", required=True, help="scores CSV path")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="fit, score and report ROC-AUC")
    _add_common_flags(p)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation variant")
    _add_common_flags(p)
    p.add_argument("--variant", required=True, help="ablation variant name")
    p.add_argument("--sweep", help="comma-separated sweep values")
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("uea", help="one-vs-rest protocol over a classification archive")
    _add_common_flags(p)
    p.add_argument("--train", required=True, help="training .ts file")
    p.add_argument("--test", required=True, help="test .ts file")
    p.set_defaults(func=cmd_uea)

    p = sub.add_parser("convert", help="convert raw data to manifests / check SETF files")
    convert_sub = p.add_subparsers(dest="convert_what", required=True)

    c = convert_sub.add_parser("ts", help=".ts classification file -> CSV series + manifest")
    c.add_argument("--train", required=True)
    c.add_argument("--test")
    c.add_argument("--out", required=True)
    c.add_argument("--normal-class", help="class treated as normal (others anomalous)")
    c.add_argument("--min-length", type=int, default=0)
    c.add_argument("--max-length", type=int, default=0)
    c.set_defaults(func=cmd_convert)

    c = convert_sub.add_parser("synthetic", help="write the synthetic benchmark as CSV + manifest")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--n-train", type=int, default=20)
    c.add_argument("--n-test", type=int, default=10)
    c.set_defaults(func=cmd_convert)

    c = convert_sub.add_parser("setf-check", help="validate SETF headers and round-trip bytes")
    c.add_argument("files", nargs="+")
    c.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # shape/size problems raised by the numeric layers are data problems
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
