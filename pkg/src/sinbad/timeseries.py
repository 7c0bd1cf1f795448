"""Multivariate series as sets of temporal window pyramids.

Every time step contributes one element: the concatenation, over strides
1..L, of a tau-sample window centred on that step (the series is zero-padded
so boundary windows always exist). The element dimension is L * tau * C and
the element count always equals the series length.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .density import AnomalyScore
from .pipeline import SetPipelineConfig, fit_set_pipeline
from .sets import ElementSet

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Series:
    """One multivariate series: values has shape (T, C)."""

    values: np.ndarray
    sample_id: str = ""
    label: int | None = None  # 0 normal, 1 anomalous, None unknown

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"series values must be (T, C) with T, C >= 1, got {arr.shape}")
        if np.isnan(arr).any():
            raise ValueError(f"series {self.sample_id!r} contains NaNs")
        object.__setattr__(self, "values", arr)

    @property
    def length(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PyramidConfig:
    """Window length tau (odd preferred) and maximal stride count L."""

    tau: int = 9
    levels: int = 10

    def __post_init__(self):
        if self.tau < 1 or self.levels < 1:
            raise ValueError("tau and levels must be >= 1")


def extract_pyramids(series: Series, cfg: PyramidConfig) -> ElementSet:
    """One element per time step: windows at strides 1..L around the step.

    For stride c the series is zero-padded by floor(c*tau/2) on the left and
    ceil(c*tau/2) on the right, and the window takes tau samples centred at
    the step (starting at the left offset for even tau). Levels and channels
    are concatenated, so the element dimension is levels * tau * channels.
    """
    T, C = series.values.shape
    tau, L = cfg.tau, cfg.levels
    offsets = np.arange(tau) - tau // 2
    level_blocks = []
    for c in range(1, L + 1):
        pad_left = (c * tau) // 2
        pad_right = c * tau - pad_left
        padded = np.zeros((T + pad_left + pad_right, C))
        padded[pad_left : pad_left + T] = series.values
        idx = np.arange(T)[:, None] + pad_left + offsets[None, :] * c
        level_blocks.append(padded[idx].reshape(T, tau * C))
    return ElementSet(np.concatenate(level_blocks, axis=1), sample_id=series.sample_id)


def score_series(
    train: list[Series],
    test: list[Series],
    pyramid: PyramidConfig = PyramidConfig(),
    config: SetPipelineConfig = SetPipelineConfig(),
    seed: int = 0,
) -> list[AnomalyScore]:
    """Full pipeline over series: pyramids, shared projection, quantile edges
    fitted on the pooled training elements, descriptors, whitened kNN."""
    if len(train) < 2:
        raise ValueError(f"need at least 2 training series, got {len(train)}")
    train_sets = [extract_pyramids(s, pyramid) for s in train]
    test_sets = [extract_pyramids(s, pyramid) for s in test]
    fitted = fit_set_pipeline(train_sets, config, seed)
    values = fitted.score_sets(test_sets)
    return [AnomalyScore(float(v), s.sample_id) for v, s in zip(values, test)]


# ---------------------------------------------------------------------------
# Readers


def read_series_csv(path) -> np.ndarray:
    """CSV with rows = time steps, columns = channels. A non-numeric first
    row is treated as a header and skipped."""
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if i == 0:
                    continue  # header row
                raise ValueError(f"{path}:{i + 1}: non-numeric value in {row!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: inconsistent column counts {sorted(widths)}")
    return np.asarray(rows, dtype=np.float64)


def read_ts_file(
    path,
    min_length: int | None = None,
    max_length: int | None = None,
) -> tuple[list[Series], list[str]]:
    """Parse the common text classification format with @problemName/@data
    headers and colon-separated dimensions.

    Each data line is dim1:dim2:...:class with every dimension a
    comma-separated value list. Variable series lengths are allowed; the
    optional min/max length filter drops series outside the range (the
    convention used for the spoken-digits corpus, 20..50 steps).
    """
    path = Path(path)
    class_labels: list[str] = []
    has_class = False
    data_started = False
    series: list[Series] = []
    labels: list[str] = []
    n_dropped = 0
    with path.open() as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            low = line.lower()
            if low.startswith("@"):
                if data_started:
                    raise ValueError(f"{path}:{lineno}: header tag after @data")
                if low.startswith("@data"):
                    data_started = True
                elif low.startswith("@classlabel"):
                    tokens = line.split()
                    has_class = len(tokens) > 1 and tokens[1].lower() == "true"
                    class_labels = tokens[2:]
                elif low.startswith("@timestamps") and "true" in low:
                    raise ValueError(f"{path}:{lineno}: timestamped data is not supported")
                # @problemName, @univariate, @dimensions, @seriesLength,
                # @equalLength and friends carry no information we need
                continue
            if not data_started:
                raise ValueError(f"{path}:{lineno}: data before @data tag")
            parts = line.split(":")
            if has_class:
                if len(parts) < 2:
                    raise ValueError(f"{path}:{lineno}: missing class value")
                label = parts[-1].strip()
                if class_labels and label not in class_labels:
                    raise ValueError(f"{path}:{lineno}: unknown class {label!r}")
                parts = parts[:-1]
            else:
                label = ""
            try:
                dims = [
                    np.array([float(v) for v in p.split(",") if v.strip() != ""])
                    for p in parts
                ]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value")
            lengths = {len(d) for d in dims}
            if len(lengths) != 1:
                raise ValueError(f"{path}:{lineno}: dimensions have unequal lengths {sorted(lengths)}")
            (T,) = lengths
            if T == 0:
                raise ValueError(f"{path}:{lineno}: empty series")
            if (min_length is not None and T < min_length) or (
                max_length is not None and T > max_length
            ):
                n_dropped += 1
                continue
            values = np.stack(dims, axis=1)
            sid = f"{path.stem}_{len(series):05d}"
            series.append(Series(values, sample_id=sid))
            labels.append(label)
    if n_dropped:
        logger.info("%s: dropped %d series outside length range [%s, %s]",
                    path.name, n_dropped, min_length, max_length)
    if not series:
        raise ValueError(f"{path}: no series parsed")
    return series, labels


def write_ts_file(path, series: list[Series], labels: list[str], problem_name: str = "problem") -> None:
    """Write series in the @problemName/@data text format (used by convert
    round-trip tests and fixtures)."""
    classes = sorted(set(labels))
    lines = [
        f"@problemName {problem_name}",
        "@timeStamps false",
        f"@univariate {'true' if series[0].n_channels == 1 else 'false'}",
        f"@classLabel true {' '.join(classes)}",
        "@data",
    ]
    for s, label in zip(series, labels):
        dims = [",".join(repr(float(v)) for v in s.values[:, c]) for c in range(s.n_channels)]
        lines.append(":".join(dims) + f":{label}")
    Path(path).write_text("\n".join(lines) + "\n")
