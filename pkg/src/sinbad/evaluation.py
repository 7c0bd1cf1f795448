"""Metrics, ablation harness, and report/figure output.

roc_auc is the Mann-Whitney statistic (ties half-credited). The ablation
harness re-runs the configured pipeline with one component swapped out and
identical seeds/data, and reports write a machine-readable CSV, a plain-text
summary, score-distribution plot data, and rendered matplotlib figures.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sets
from .benchmark import LabeledSets, cluster_benchmark, equal_mean_dataset
from .pipeline import (
    KNN,
    MEAN,
    PER_VARIABLE,
    SetPipelineConfig,
    fit_set_pipeline,
)

VARIANTS = (
    "full",
    "sim_avg",
    "no_projection",
    "no_whitening",
    "identity_proj",
    "pca_proj",
    "per_variable",
    "bins_sweep",
    "projections_sweep",
    "levels_sweep",
)

_SWEEP_DEFAULTS = {
    "bins_sweep": (5, 10, 20, 40),
    "projections_sweep": (5, 100, 1000),
    "levels_sweep": (5, 10, 15),
}


def roc_auc(scores, labels) -> float:
    """Probability a random anomalous sample outscores a random normal one.

    Mann-Whitney U normalised by n1*n0 with ties counted 0.5. Requires both
    labels present; invariant under strictly increasing score transforms.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ in shape")
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("roc_auc needs at least one sample of each label")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    ranks[order] = np.arange(1, len(scores) + 1)
    # average ranks over ties
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels == 1].sum()
    u = rank_sum - len(pos) * (len(pos) + 1) / 2.0
    return float(u / (len(pos) * len(neg)))


@dataclass(frozen=True)
class ReportRow:
    variant: str
    dataset: str
    param: str  # swept parameter name, "" when not a sweep
    value: str  # swept parameter value as text
    seed: int
    metric: str
    score: float


@dataclass
class AblationReport:
    variant: str
    config_snapshot: str
    rows: list[ReportRow] = field(default_factory=list)
    distributions: dict = field(default_factory=dict)  # key -> (scores, labels)


def _variant_config(base: SetPipelineConfig, variant: str, value=None) -> SetPipelineConfig:
    if variant == "full":
        return base
    if variant == "sim_avg":
        return base.with_overrides(descriptor=MEAN)
    if variant in ("no_projection", "identity_proj"):
        return base.with_overrides(projection=sets.IDENTITY)
    if variant == "pca_proj":
        return base.with_overrides(projection=sets.PCA)
    if variant == "no_whitening":
        return base.with_overrides(scorer=KNN)
    if variant == "per_variable":
        return base.with_overrides(scorer=PER_VARIABLE)
    if variant == "bins_sweep":
        return base.with_overrides(n_bins=int(value))
    if variant == "projections_sweep":
        return base.with_overrides(n_projections=int(value))
    raise ValueError(f"unknown variant {variant!r} (choose from {', '.join(VARIANTS)})")


def run_sets_variant(
    data: LabeledSets,
    base: SetPipelineConfig,
    variant: str,
    seed: int,
    value=None,
) -> tuple[np.ndarray, float]:
    """Score the labelled sets under a variant config; returns (scores, auc)."""
    cfg = _variant_config(base, variant, value)
    if cfg.projection == sets.PCA:
        # only n_dims eigenvectors exist; the PCA variant uses at most that
        cfg = cfg.with_overrides(n_projections=min(cfg.n_projections, data.train[0].n_dims))
    fitted = fit_set_pipeline(data.train, cfg, seed)
    scores = fitted.score_sets(data.test)
    return scores, roc_auc(scores, data.labels)


def run_ablation(
    variant: str,
    base: SetPipelineConfig = SetPipelineConfig(),
    dataset: str = "synthetic",
    data: LabeledSets | None = None,
    seed: int = 0,
    sweep_values=None,
    config_snapshot: str = "",
) -> AblationReport:
    """Execute the modified pipeline with the same seeds and data as the base.

    `dataset` names the built-in data ("synthetic" for the cluster benchmark,
    "equal_mean" for the equal-mean pattern data) unless `data` is given
    directly. Sweep variants run once per swept value; every report also
    carries the unmodified baseline row.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r} (choose from {', '.join(VARIANTS)})")
    if variant == "levels_sweep":
        raise ValueError("levels_sweep applies to the time-series pipeline; use cli eval/ablate "
                         "with a timeseries config")
    if data is None:
        if dataset == "synthetic":
            data = cluster_benchmark(seed)
        elif dataset == "equal_mean":
            data = equal_mean_dataset(seed)
        else:
            raise ValueError(f"unknown built-in dataset {dataset!r}")

    report = AblationReport(variant, config_snapshot)
    base_scores, base_auc = run_sets_variant(data, base, "full", seed)
    report.rows.append(ReportRow("full", dataset, "", "", seed, "roc_auc", base_auc))
    report.distributions["full"] = (base_scores, data.labels)

    if variant == "full":
        return report
    if variant in _SWEEP_DEFAULTS:
        values = sweep_values if sweep_values is not None else _SWEEP_DEFAULTS[variant]
        param = "n_bins" if variant == "bins_sweep" else "n_projections"
        for value in values:
            scores, auc = run_sets_variant(data, base, variant, seed, value)
            report.rows.append(ReportRow(variant, dataset, param, str(value), seed, "roc_auc", auc))
            report.distributions[f"{variant}_{value}"] = (scores, data.labels)
    else:
        scores, auc = run_sets_variant(data, base, variant, seed)
        report.rows.append(ReportRow(variant, dataset, "", "", seed, "roc_auc", auc))
        report.distributions[variant] = (scores, data.labels)
    return report


# ---------------------------------------------------------------------------
# Report output

_CSV_FIELDS = ("variant", "dataset", "param", "value", "seed", "metric", "score")


def _atomic_write(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _snapshot_comment_lines(snapshot: str) -> str:
    if not snapshot:
        return ""
    return "".join(f"# {line}\n" for line in snapshot.strip().splitlines())


def write_report(report: AblationReport, outdir, figures: bool = True) -> list[Path]:
    """Emit report.csv, summary.txt, score_distributions.csv and figures.

    The CSVs start with '#'-prefixed config snapshot lines so every output
    records the configuration that produced it. Figures are rendered with the
    non-interactive matplotlib backend: a score-distribution histogram and,
    for sweep reports, a metric-vs-parameter curve.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {outdir}: {exc}")
    written: list[Path] = []
    header = _snapshot_comment_lines(report.config_snapshot)

    buf = io.StringIO()
    buf.write(header)
    writer = csv.writer(buf)
    writer.writerow(_CSV_FIELDS)
    for row in report.rows:
        writer.writerow([row.variant, row.dataset, row.param, row.value, row.seed, row.metric,
                         repr(row.score)])
    path = outdir / "report.csv"
    _atomic_write(path, buf.getvalue().encode())
    written.append(path)

    lines = [f"ablation: {report.variant}", ""]
    width = max((len(r.variant) + len(r.value) for r in report.rows), default=10) + 4
    for row in report.rows:
        name = row.variant if not row.value else f"{row.variant} {row.param}={row.value}"
        lines.append(f"{name:<{width}} {row.metric} = {row.score:.4f}  (dataset={row.dataset}, seed={row.seed})")
    path = outdir / "summary.txt"
    _atomic_write(path, ("\n".join(lines) + "\n").encode())
    written.append(path)

    buf = io.StringIO()
    buf.write(header)
    writer = csv.writer(buf)
    writer.writerow(["run", "sample_index", "score", "label"])
    for key, (scores, labels) in report.distributions.items():
        for i, (s, l) in enumerate(zip(scores, labels)):
            writer.writerow([key, i, repr(float(s)), int(l)])
    path = outdir / "score_distributions.csv"
    _atomic_write(path, buf.getvalue().encode())
    written.append(path)

    if figures:
        written.extend(_render_figures(report, outdir))
    return written


def read_report_csv(path) -> list[ReportRow]:
    rows = []
    with Path(path).open(newline="") as fh:
        lines = [l for l in fh if not l.startswith("#")]
    for rec in csv.DictReader(lines):
        rows.append(
            ReportRow(rec["variant"], rec["dataset"], rec["param"], rec["value"],
                      int(rec["seed"]), rec["metric"], float(rec["score"]))
        )
    return rows


def _render_figures(report: AblationReport, outdir: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for key, (scores, labels) in report.distributions.items():
        scores = np.asarray(scores, dtype=np.float64)
        labels = np.asarray(labels)
        fig, ax = plt.subplots(figsize=(6, 4))
        bins = np.histogram_bin_edges(scores, bins=30)
        ax.hist(scores[labels == 0], bins=bins, alpha=0.6, label="normal")
        ax.hist(scores[labels == 1], bins=bins, alpha=0.6, label="anomalous")
        ax.set_xlabel("anomaly score")
        ax.set_ylabel("count")
        ax.set_title(f"score distribution: {key}")
        ax.legend()
        fig.tight_layout()
        path = outdir / f"scores_{key}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    sweep_rows = [r for r in report.rows if r.param]
    if sweep_rows:
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [float(r.value) for r in sweep_rows]
        ys = [r.score for r in sweep_rows]
        ax.plot(xs, ys, marker="o")
        ax.set_xscale("log")
        ax.set_xlabel(sweep_rows[0].param)
        ax.set_ylabel(sweep_rows[0].metric)
        ax.set_title(f"{report.variant}")
        fig.tight_layout()
        path = outdir / f"sweep_{report.variant}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
