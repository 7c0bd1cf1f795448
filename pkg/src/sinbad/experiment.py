"""Experiment orchestration: datasets, eval/ablate runs, model bundles.

Everything the CLI does lives here so it stays testable as a library. A model
bundle is a directory with config.txt (the config snapshot), pipeline.json
(projections, bin edges, run plan, fusion statistics) and one SINM blob per
fitted scorer; fitting twice with the same config and seed reproduces the
bundle byte for byte.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import density, evaluation, imagesets, manifest as manifest_mod, sets, timeseries
from .benchmark import LabeledSets, cluster_benchmark, equal_mean_dataset
from .config import IMAGE, SETS, TIMESERIES, ConfigError, ExperimentConfig, config_snapshot
from .evaluation import AblationReport, ReportRow, roc_auc
from .pipeline import SetPipelineConfig, derive_seeds, fit_set_pipeline

BUNDLE_FORMAT_VERSION = 1


class DataError(Exception):
    """Missing or malformed input data."""


@dataclass(frozen=True)
class SetsData:
    train: list
    test: list
    test_ids: list
    labels: np.ndarray | None


@dataclass(frozen=True)
class ImageData:
    levels: dict  # tag -> (train_grids, test_grids)
    test_ids: list
    labels: np.ndarray | None


def _labels_or_none(samples) -> np.ndarray | None:
    labels = [s.label for s in samples]
    if any(l is None for l in labels):
        return None
    return np.asarray(labels, dtype=int)


def load_dataset(cfg: ExperimentConfig):
    """Materialise the configured dataset for the configured pipeline."""
    if cfg.dataset == "synthetic":
        data = cluster_benchmark(cfg.seed, n_train=cfg.synthetic_train,
                                 n_test_normal=cfg.synthetic_test,
                                 n_test_anomalous=cfg.synthetic_test)
        return SetsData(data.train, data.test, [s.sample_id for s in data.test], data.labels)
    if cfg.dataset == "equal_mean":
        data = equal_mean_dataset(cfg.seed)
        return SetsData(data.train, data.test, [s.sample_id for s in data.test], data.labels)

    try:
        mani = manifest_mod.load_manifest(cfg.manifest, cfg.data_dir or None)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load manifest: {exc}")
    train, test = mani.split(manifest_mod.TRAIN), mani.split(manifest_mod.TEST)
    if not train:
        raise DataError(f"{cfg.manifest}: no training samples in manifest")

    if cfg.pipeline == TIMESERIES:
        def read(sample):
            path = mani.resolve(sample, "series")
            try:
                values = timeseries.read_series_csv(path)
            except (OSError, ValueError) as exc:
                raise DataError(f"sample {sample.sample_id!r}: {exc}")
            return timeseries.Series(values, sample.sample_id, sample.label)

        return SetsData(
            [timeseries.extract_pyramids(read(s), cfg.pyramid_config()) for s in train],
            [timeseries.extract_pyramids(read(s), cfg.pyramid_config()) for s in test],
            [s.sample_id for s in test],
            _labels_or_none(test),
        )

    if cfg.pipeline == SETS:
        def read_sets(sample):
            path = mani.resolve(sample, "elements")
            try:
                values = timeseries.read_series_csv(path)  # rows = elements
            except (OSError, ValueError) as exc:
                raise DataError(f"sample {sample.sample_id!r}: {exc}")
            return sets.ElementSet(values, sample.sample_id)

        return SetsData([read_sets(s) for s in train], [read_sets(s) for s in test],
                        [s.sample_id for s in test], _labels_or_none(test))

    if cfg.pipeline == IMAGE:
        levels = {}
        for tag in cfg.image_levels:
            def read_grid(sample):
                path = mani.resolve(sample, tag)
                try:
                    return imagesets.read_setf(path, level_tag=tag, sample_id=sample.sample_id)
                except (OSError, ValueError, KeyError) as exc:
                    raise DataError(f"sample {sample.sample_id!r}: {exc}")
            levels[tag] = ([read_grid(s) for s in train], [read_grid(s) for s in test])
        return ImageData(levels, [s.sample_id for s in test], _labels_or_none(test))

    raise ConfigError(f"unknown pipeline {cfg.pipeline!r}")


def _require_labels(data) -> np.ndarray:
    if data.labels is None:
        raise DataError("test split has unlabeled samples; eval needs 0/1 labels")
    if len(set(data.labels.tolist())) < 2:
        raise DataError("eval needs at least one normal and one anomalous test sample")
    return data.labels


def _score_image(cfg: ExperimentConfig, data: ImageData):
    level_cfgs = cfg.level_configs()
    level_seeds = derive_seeds(cfg.seed, len(cfg.image_levels))
    per_level = []
    for tag, level_seed in zip(cfg.image_levels, level_seeds):
        train_grids, test_grids = data.levels[tag]
        per_level.append(
            imagesets.score_level(train_grids, test_grids, level_cfgs[tag],
                                  cfg.crop_ratios, cfg.stride, level_seed, cfg.jobs)
        )
    fused = imagesets.fuse_levels(per_level, normalize=cfg.normalize_fusion)
    return per_level, fused


def run_eval(cfg: ExperimentConfig) -> AblationReport:
    """Score the configured pipeline and report ROC-AUC.

    On the synthetic benchmark the report carries the full method plus the
    mean-pooling and no-whitening reference rows.
    """
    snapshot = config_snapshot(cfg)
    data = load_dataset(cfg)
    if cfg.pipeline == IMAGE:
        labels = _require_labels(data)
        per_level, fused = _score_image(cfg, data)
        report = AblationReport("full", snapshot)
        report.rows.append(ReportRow("full", "manifest", "", "", cfg.seed, "roc_auc",
                                     roc_auc(fused, labels)))
        for tag, lv in zip(cfg.image_levels, per_level):
            report.rows.append(ReportRow(f"level_{tag}", "manifest", "", "", cfg.seed,
                                         "roc_auc", roc_auc(lv.test, labels)))
        report.distributions["full"] = (fused, labels)
        return report

    labels = _require_labels(data)
    labeled = LabeledSets(data.train, data.test, labels)
    base = cfg.pipeline_config()
    report = AblationReport("eval", snapshot)
    for variant in ("full", "sim_avg", "no_whitening") if cfg.dataset == "synthetic" else ("full",):
        scores, auc = evaluation.run_sets_variant(labeled, base, variant, cfg.seed)
        report.rows.append(ReportRow(variant, cfg.dataset, "", "", cfg.seed, "roc_auc", auc))
        report.distributions[variant] = (scores, labels)
    return report


def run_ablation_cfg(cfg: ExperimentConfig, variant: str, sweep_values=None) -> AblationReport:
    """Variant run with identical seeds/data as the base configuration."""
    snapshot = config_snapshot(cfg)
    if variant not in evaluation.VARIANTS:
        raise ConfigError(f"unknown variant {variant!r} (choose from {', '.join(evaluation.VARIANTS)})")
    if cfg.pipeline == IMAGE:
        raise ConfigError("ablation variants run on the sets/timeseries pipelines; "
                          "image levels are compared through eval per-level rows")
    if variant == "levels_sweep" and cfg.pipeline != TIMESERIES:
        raise ConfigError("levels_sweep needs the timeseries pipeline")

    if cfg.pipeline == TIMESERIES and variant == "levels_sweep":
        values = sweep_values if sweep_values is not None else (5, 10, 15)
        report = AblationReport(variant, snapshot)
        base = cfg.pipeline_config()
        base_data = load_dataset(cfg)
        labels = _require_labels(base_data)
        fitted = fit_set_pipeline(base_data.train, base, cfg.seed)
        scores = fitted.score_sets(base_data.test)
        report.rows.append(ReportRow("full", cfg.dataset, "", "", cfg.seed, "roc_auc",
                                     roc_auc(scores, labels)))
        report.distributions["full"] = (scores, labels)
        for value in values:
            data = load_dataset(_replace_cfg(cfg, levels=int(value)))
            fitted = fit_set_pipeline(data.train, base, cfg.seed)
            scores = fitted.score_sets(data.test)
            report.rows.append(ReportRow(variant, cfg.dataset, "levels", str(value),
                                         cfg.seed, "roc_auc", roc_auc(scores, labels)))
            report.distributions[f"{variant}_{value}"] = (scores, labels)
        return report

    data = load_dataset(cfg)
    labels = _require_labels(data)
    labeled = LabeledSets(data.train, data.test, labels)
    return evaluation.run_ablation(
        variant,
        base=cfg.pipeline_config(),
        dataset=cfg.dataset if cfg.dataset != "manifest" else cfg.pipeline,
        data=labeled,
        seed=cfg.seed,
        sweep_values=sweep_values,
        config_snapshot=snapshot,
    )


def _replace_cfg(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, **kw)


# ---------------------------------------------------------------------------
# Model bundles


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _projection_doc(projection: sets.ProjectionMatrix | None) -> dict | None:
    if projection is None:
        return None
    doc = {"kind": projection.kind, "seed": projection.seed,
           "n_projections": projection.n_projections, "n_dims": projection.n_dims}
    if projection.kind == sets.PCA:
        doc["weights"] = projection.weights.tolist()
    return doc


def _projection_from_doc(doc: dict | None) -> sets.ProjectionMatrix | None:
    if doc is None:
        return None
    if doc["kind"] == sets.PCA:
        return sets.ProjectionMatrix(np.asarray(doc["weights"]), seed=None, kind=sets.PCA)
    return sets.make_projection(doc["seed"], doc["n_dims"], doc["n_projections"], doc["kind"])


def _edges_doc(edges: sets.BinEdges | None) -> dict | None:
    if edges is None:
        return None
    return {"mode": edges.mode, "n_bins": edges.n_bins,
            "edges": [e.tolist() for e in edges.edges]}


def _edges_from_doc(doc: dict | None) -> sets.BinEdges | None:
    if doc is None:
        return None
    arrays = tuple(np.asarray(e, dtype=np.float64) for e in doc["edges"])
    degenerate = tuple(len(e) < 3 for e in arrays)
    return sets.BinEdges(arrays, mode=doc["mode"], n_bins=doc["n_bins"], degenerate=degenerate)


def _fit_run(train_sets, pipeline_cfg: SetPipelineConfig, seed: int, models_dir: Path, name: str):
    fitted = fit_set_pipeline(train_sets, pipeline_cfg, seed)
    if fitted.knn_model is not None:
        model = fitted.knn_model
    else:
        # store a W = I blob; scoring replays the recorded scorer
        gaussian = density.fit_gaussian(fitted.train_descriptors, pipeline_cfg.shrinkage)
        model = density.WhitenedKnnModel(
            gaussian, pipeline_cfg.k, fitted.train_descriptors,
            _whitener=density._Whitener(dense=np.eye(fitted.train_descriptors.shape[1])),
            _raw_train=fitted.train_descriptors,
        )
    model_file = models_dir / f"{name}.sinm"
    density.save_model(model, model_file)
    run_doc = {
        "model_file": f"models/{model_file.name}",
        "seed": seed,
        "projection": _projection_doc(fitted.projection),
        "edges": _edges_doc(fitted.edges),
        "descriptor": pipeline_cfg.descriptor,
        "scorer": pipeline_cfg.scorer,
        "k": pipeline_cfg.k,
    }
    return fitted, run_doc


def fit_bundle(cfg: ExperimentConfig, outdir) -> Path:
    """Fit the configured pipeline on the train split and persist it."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    models_dir = outdir / "models"
    models_dir.mkdir(exist_ok=True)
    data = load_dataset(cfg)

    doc = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "pipeline": cfg.pipeline,
        "seed": cfg.seed,
        "normalize_fusion": cfg.normalize_fusion,
        "levels": [],
    }
    if cfg.pipeline == IMAGE:
        level_cfgs = cfg.level_configs()
        level_seeds = derive_seeds(cfg.seed, len(cfg.image_levels))
        for tag, level_seed in zip(cfg.image_levels, level_seeds):
            level_cfg = level_cfgs[tag]
            train_grids, _ = ImageDataView(data).level(tag)
            pipeline_cfg = level_cfg.pipeline_config()
            runs = []
            run_train_scores = []
            plan = _level_run_plan(level_cfg, cfg.crop_ratios, cfg.stride, level_seed)
            for idx, (rep, ratio, spec, run_seed) in enumerate(plan):
                train_sets = [imagesets.crop_grid(g, spec) for g in train_grids]
                name = f"{tag}_rep{rep}_run{idx:03d}"
                fitted, run_doc = _fit_run(train_sets, pipeline_cfg, run_seed, models_dir, name)
                run_doc.update({"rep": rep, "ratio": ratio,
                                "center": [spec.center[0], spec.center[1]]})
                runs.append(run_doc)
                run_train_scores.append(fitted.train_scores)
            train_avg = _average_plan(plan, run_train_scores, level_cfg.repetitions, cfg.crop_ratios)
            doc["levels"].append({
                "tag": tag,
                "weight": level_cfg.weight,
                "repetitions": level_cfg.repetitions,
                "train_stats": {"mean": float(train_avg.mean()), "std": float(train_avg.std())},
                "runs": runs,
            })
    else:
        if cfg.pipeline == TIMESERIES:
            doc["pyramid"] = {"tau": cfg.tau, "levels": cfg.levels}
        pipeline_cfg = cfg.pipeline_config()
        fitted, run_doc = _fit_run(data.train, pipeline_cfg, cfg.seed, models_dir, "main")
        run_doc.update({"rep": 0, "ratio": None, "center": None})
        doc["levels"].append({
            "tag": "series" if cfg.pipeline == TIMESERIES else "sets",
            "weight": 1.0,
            "repetitions": 1,
            "train_stats": {"mean": float(fitted.train_scores.mean()),
                            "std": float(fitted.train_scores.std())},
            "runs": [run_doc],
        })

    _atomic_write_bytes(outdir / "pipeline.json",
                        (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode())
    _atomic_write_bytes(outdir / "config.txt", config_snapshot(cfg).encode())
    return outdir


class ImageDataView:
    def __init__(self, data):
        if not isinstance(data, ImageData):
            raise DataError("image pipeline needs SETF grids (check manifest level files)")
        self.data = data

    def level(self, tag):
        return self.data.levels[tag]


def _level_run_plan(level_cfg, crop_ratios, stride, seed):
    """(rep, ratio, spec, seed) for every independent fit-and-score run.

    Shared between in-memory level scoring and bundle fitting so both derive
    identical seeds.
    """
    rep_seeds = derive_seeds(seed, level_cfg.repetitions)
    plan = []
    for rep, rep_seed in enumerate(rep_seeds):
        specs = [(ratio, spec) for ratio in crop_ratios
                 for spec in imagesets.enumerate_crops(ratio, stride)]
        run_seeds = derive_seeds(rep_seed, len(specs))
        plan.extend((rep, ratio, spec, s) for (ratio, spec), s in zip(specs, run_seeds))
    return plan


def _average_plan(plan, per_run_scores, repetitions, crop_ratios):
    """Average centres within ratio, then ratios, then repetitions."""
    rep_means = []
    for rep in range(repetitions):
        ratio_means = []
        for ratio in crop_ratios:
            chunk = [s for (r, ra, _, _), s in zip(plan, per_run_scores)
                     if r == rep and ra == ratio]
            ratio_means.append(np.mean(chunk, axis=0))
        rep_means.append(np.mean(ratio_means, axis=0))
    return np.mean(rep_means, axis=0)


def _score_run(run_doc: dict, bundle_dir: Path, element_sets) -> np.ndarray:
    projection = _projection_from_doc(run_doc["projection"])
    edges = _edges_from_doc(run_doc["edges"])
    model = density.load_model(bundle_dir / run_doc["model_file"])
    if run_doc["descriptor"] == "mean":
        H = np.stack([sets.mean_pool(s) for s in element_sets])
    else:
        projected = [sets.project_elements(s, projection) for s in element_sets]
        H = sets.describe_sets(projected, edges, run_doc["descriptor"],
                               projection.seed if projection else None)
    if run_doc["scorer"] == "knn":
        return density.knn_mean_sq_distances(model.whitened_train, H, run_doc["k"])
    return density.score_knn_batch(model, H)


def score_with_bundle(bundle_dir, cfg: ExperimentConfig):
    """Score the configured test split with a fitted bundle.

    Returns (sample_ids, per_level dict tag -> scores, fused scores).
    """
    bundle_dir = Path(bundle_dir)
    pipeline_path = bundle_dir / "pipeline.json"
    if not pipeline_path.exists():
        raise DataError(f"{bundle_dir} is not a model bundle (missing pipeline.json)")
    doc = json.loads(pipeline_path.read_text())
    if doc.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise DataError(f"unsupported bundle format {doc.get('format_version')!r}")
    if doc["pipeline"] != cfg.pipeline:
        raise DataError(f"bundle was fitted for pipeline {doc['pipeline']!r}, "
                        f"config says {cfg.pipeline!r}")
    if cfg.pipeline == TIMESERIES:
        stored = doc.get("pyramid", {})
        if stored and (stored["tau"] != cfg.tau or stored["levels"] != cfg.levels):
            cfg = _replace_cfg(cfg, tau=stored["tau"], levels=stored["levels"])
    data = load_dataset(cfg)

    per_level = {}
    fused = None
    for level in doc["levels"]:
        tag = level["tag"]
        if cfg.pipeline == IMAGE:
            _, test_grids = ImageDataView(data).level(tag)
            plan_scores = []
            plan = []
            for run in level["runs"]:
                spec = imagesets.CropSpec(run["ratio"], tuple(run["center"]))
                crops = [imagesets.crop_grid(g, spec) for g in test_grids]
                plan_scores.append(_score_run(run, bundle_dir, crops))
                plan.append((run["rep"], run["ratio"], spec, run["seed"]))
            ratios = list(dict.fromkeys(r["ratio"] for r in level["runs"]))
            scores = _average_plan(plan, plan_scores, level["repetitions"], ratios)
        else:
            scores = _score_run(level["runs"][0], bundle_dir, data.test)
        per_level[tag] = scores
        contribution = scores
        if len(doc["levels"]) > 1:
            if doc.get("normalize_fusion", True):
                mu, sd = level["train_stats"]["mean"], level["train_stats"]["std"]
                contribution = (scores - mu) / (sd if sd > 0 else 1.0)
            contribution = level["weight"] * contribution
        fused = contribution if fused is None else fused + contribution
    return data.test_ids, per_level, fused


# ---------------------------------------------------------------------------
# One-vs-rest protocol for labelled classification archives


def one_vs_rest_auc(
    train_path,
    test_path,
    cfg: ExperimentConfig,
) -> tuple[float, dict]:
    """Mean ROC-AUC over classes: each class in turn is the normal one.

    Trains on the chosen class's training series only and scores the full
    test file (other classes are the anomalies), the usual protocol for
    turning a classification archive into anomaly detection.
    """
    min_len = cfg.min_length or None
    max_len = cfg.max_length or None
    try:
        train_series, train_labels = timeseries.read_ts_file(train_path, min_len, max_len)
        test_series, test_labels = timeseries.read_ts_file(test_path, min_len, max_len)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc))
    classes = sorted(set(train_labels))
    per_class = {}
    pyramid = cfg.pyramid_config()
    for ci, cls in enumerate(classes):
        train = [s for s, l in zip(train_series, train_labels) if l == cls]
        if len(train) < 2:
            continue
        scores = timeseries.score_series(train, test_series, pyramid,
                                         cfg.pipeline_config(), seed=cfg.seed + ci)
        labels = np.array([0 if l == cls else 1 for l in test_labels])
        per_class[cls] = roc_auc([s.value for s in scores], labels)
    if not per_class:
        raise DataError("no class had at least 2 training series")
    return float(np.mean(list(per_class.values()))), per_class
