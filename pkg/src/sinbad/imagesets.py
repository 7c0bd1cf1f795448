"""Image feature grids as element sets: crops, level scoring, fusion, SETF IO.

Feature grids are precomputed by the companion extractor and shipped as SETF
files; each spatial cell of a grid is one element. Scoring ensembles over
crop ratios and centre locations (each crop spec gets an independent
fit-and-score run against the training crops at the same spec), averages over
centres then ratios, repeats with derived seeds, and finally fuses the
per-level scores with fixed weights.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pipeline import KNN, WHITENED_KNN, SetPipelineConfig, derive_seeds, fit_set_pipeline
from .sets import UNIFORM, ElementSet

_SETF_MAGIC = b"SETF"
_SETF_VERSION = 1
_SETF_DTYPE_F32 = 1
_SETF_RANK = 3

BLOCK3 = "block3"
BLOCK4 = "block4"
RAW_PIXELS = "raw_pixels"

DEFAULT_CROP_RATIOS = (1.0, 0.7, 0.5, 0.33)
DEFAULT_CROP_STRIDE = 0.25
DEFAULT_LEVEL_WEIGHTS = (1.0, 1.0, 0.1)


@dataclass(frozen=True)
class FeatureGrid:
    """H x W x D feature tensor for one sample at one representation level."""

    grid: np.ndarray
    level_tag: str = ""
    sample_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.grid, dtype=np.float64)
        if arr.ndim != 3 or min(arr.shape) < 1:
            raise ValueError(f"grid must be (H, W, D) with all dims >= 1, got {arr.shape}")
        object.__setattr__(self, "grid", arr)

    @property
    def shape(self):
        return self.grid.shape


@dataclass(frozen=True)
class CropSpec:
    """Fractional crop: side ratio in (0, 1], centre (cy, cx) in [0, 1]."""

    ratio: float
    center: tuple[float, float]


@dataclass(frozen=True)
class LevelConfig:
    """Per-level pipeline settings and fusion weight."""

    n_projections: int = 1000
    n_bins: int = 5
    edge_mode: str = UNIFORM
    whitening: bool = True
    repetitions: int = 1
    weight: float = 1.0
    k: int = 1
    shrinkage: float = 0.1
    descriptor: str = "cumulative"

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.weight < 0:
            raise ValueError("weight must be >= 0")

    def pipeline_config(self) -> SetPipelineConfig:
        return SetPipelineConfig(
            n_projections=self.n_projections,
            n_bins=self.n_bins,
            edge_mode=self.edge_mode,
            descriptor=self.descriptor,
            scorer=WHITENED_KNN if self.whitening else KNN,
            k=self.k,
            shrinkage=self.shrinkage,
        )


def default_level_configs() -> dict[str, LevelConfig]:
    """Default per-level settings: 1000 projections and whitening for the two
    backbone block levels, 10 projections / no whitening / 16 averaged
    repetitions for the raw-pixel level, fusion weights (1, 1, 0.1)."""
    return {
        BLOCK3: LevelConfig(n_projections=1000, weight=1.0),
        BLOCK4: LevelConfig(n_projections=1000, weight=1.0),
        RAW_PIXELS: LevelConfig(n_projections=10, whitening=False, repetitions=16, weight=0.1),
    }


# ---------------------------------------------------------------------------
# SETF binary feature-grid format


def write_setf(grid: FeatureGrid, path) -> None:
    """Write the SETF blob: magic, u32 version, u8 dtype (1 = f32 LE),
    u32 rank, u32 dims H, W, D, then H*W*D raw values."""
    H, W, D = grid.shape
    payload = [
        _SETF_MAGIC,
        struct.pack("<I", _SETF_VERSION),
        struct.pack("<B", _SETF_DTYPE_F32),
        struct.pack("<IIII", _SETF_RANK, H, W, D),
        np.ascontiguousarray(grid.grid, dtype="<f4").tobytes(),
    ]
    Path(path).write_bytes(b"".join(payload))


def read_setf(path, level_tag: str = "", sample_id: str = "") -> FeatureGrid:
    blob = Path(path).read_bytes()
    return parse_setf(blob, level_tag=level_tag, sample_id=sample_id, source=str(path))


def parse_setf(blob: bytes, level_tag: str = "", sample_id: str = "", source: str = "<bytes>") -> FeatureGrid:
    if blob[:4] != _SETF_MAGIC:
        raise ValueError(f"{source}: bad magic {blob[:4]!r}, expected {_SETF_MAGIC!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _SETF_VERSION:
        raise ValueError(f"{source}: unsupported SETF version {version}")
    (dtype_code,) = struct.unpack_from("<B", blob, 8)
    if dtype_code != _SETF_DTYPE_F32:
        raise ValueError(f"{source}: unsupported dtype code {dtype_code}")
    rank, H, W, D = struct.unpack_from("<IIII", blob, 9)
    if rank != _SETF_RANK:
        raise ValueError(f"{source}: rank must be {_SETF_RANK}, got {rank}")
    expected = 25 + 4 * H * W * D
    if len(blob) != expected:
        raise ValueError(f"{source}: payload size mismatch ({len(blob)} bytes, expected {expected})")
    values = np.frombuffer(blob, dtype="<f4", count=H * W * D, offset=25)
    return FeatureGrid(values.reshape(H, W, D).astype(np.float64), level_tag, sample_id)


# ---------------------------------------------------------------------------
# Crops


def crop_grid(grid: FeatureGrid, spec: CropSpec) -> ElementSet:
    """Cells inside the crop window as an (orderless) element set.

    Window side is ceil(ratio * H) x ceil(ratio * W); the window is placed
    with its centre nearest the fractional centre (half-up rounding) and
    clamped inside the grid.
    """
    if not 0.0 < spec.ratio <= 1.0:
        raise ValueError(f"crop ratio must be in (0, 1], got {spec.ratio}")
    H, W, D = grid.shape
    cy, cx = spec.center

    def window(size, frac):
        side = int(np.ceil(spec.ratio * size))
        if side < 1:
            raise ValueError(f"empty crop window for ratio {spec.ratio} on size {size}")
        start = int(np.floor(frac * size - side / 2.0 + 0.5))
        return min(max(start, 0), size - side), side

    y0, hh = window(H, cy)
    x0, ww = window(W, cx)
    cells = grid.grid[y0 : y0 + hh, x0 : x0 + ww].reshape(hh * ww, D)
    return ElementSet(cells, sample_id=grid.sample_id)


def enumerate_crops(ratio: float, stride: float) -> list[CropSpec]:
    """Crop centres on the fractional lattice r/2, r/2+stride, ... 1-r/2.

    Lattice points past the end clamp onto the end value and duplicates are
    removed, so ratio 1.0 yields exactly the single centred spec.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if not 0.0 < stride <= 1.0:
        raise ValueError(f"stride must be in (0, 1], got {stride}")
    start, end = ratio / 2.0, 1.0 - ratio / 2.0
    coords = []
    value = start
    while value < end - 1e-9:
        coords.append(value)
        value += stride
    coords.append(end)
    coords = sorted({round(c, 9) for c in coords})
    return [CropSpec(ratio, (cy, cx)) for cy in coords for cx in coords]


# ---------------------------------------------------------------------------
# Level scoring and fusion


@dataclass(frozen=True)
class LevelScores:
    """Per-sample scores for one level: test scores plus the training-side
    (leave-one-out) scores used to normalise before fusion."""

    test: np.ndarray
    train: np.ndarray
    level_tag: str = ""
    weight: float = 1.0


def _run_crop_spec(train_grids, test_grids, spec, config, seed):
    train_sets = [crop_grid(g, spec) for g in train_grids]
    test_sets = [crop_grid(g, spec) for g in test_grids]
    fitted = fit_set_pipeline(train_sets, config, seed)
    return fitted.score_sets(test_sets), fitted.train_scores


def score_level(
    train_grids: list[FeatureGrid],
    test_grids: list[FeatureGrid],
    level_cfg: LevelConfig,
    crop_ratios=DEFAULT_CROP_RATIOS,
    stride: float = DEFAULT_CROP_STRIDE,
    seed: int = 0,
    jobs: int = 1,
) -> LevelScores:
    """Fit-and-score every (ratio, centre, repetition) independently, average
    centres within a ratio, then ratios, then repetitions.

    Every crop spec refits projection, edges and scorer on the training crops
    at that same spec; repetitions re-randomise both with seeds derived from
    `seed`. The returned train scores go through the same averaging.
    """
    tags = {g.level_tag for g in train_grids + test_grids}
    if len(tags) > 1:
        raise ValueError(f"grids mix level tags {sorted(tags)}")
    depths = {g.shape[2] for g in train_grids + test_grids}
    if len(depths) > 1:
        raise ValueError(f"grids mix feature depths {sorted(depths)}")
    config = level_cfg.pipeline_config()
    rep_seeds = derive_seeds(seed, level_cfg.repetitions)

    runs = []
    for rep, rep_seed in enumerate(rep_seeds):
        specs = [spec for ratio in crop_ratios for spec in enumerate_crops(ratio, stride)]
        spec_seeds = derive_seeds(rep_seed, len(specs))
        runs.extend((spec, s) for spec, s in zip(specs, spec_seeds))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(lambda rs: _run_crop_spec(train_grids, test_grids, rs[0], config, rs[1]), runs)
            )
    else:
        results = [_run_crop_spec(train_grids, test_grids, spec, config, s) for spec, s in runs]

    by_run = iter(results)
    rep_test, rep_train = [], []
    for rep in range(level_cfg.repetitions):
        ratio_test, ratio_train = [], []
        for ratio in crop_ratios:
            n_centers = len(enumerate_crops(ratio, stride))
            chunk = [next(by_run) for _ in range(n_centers)]
            ratio_test.append(np.mean([c[0] for c in chunk], axis=0))
            ratio_train.append(np.mean([c[1] for c in chunk], axis=0))
        rep_test.append(np.mean(ratio_test, axis=0))
        rep_train.append(np.mean(ratio_train, axis=0))
    return LevelScores(
        np.mean(rep_test, axis=0),
        np.mean(rep_train, axis=0),
        level_tag=train_grids[0].level_tag if train_grids else "",
        weight=level_cfg.weight,
    )


def fuse_levels(levels: list[LevelScores], weights=None, normalize: bool = True) -> np.ndarray:
    """Weighted sum of per-level scores.

    With normalisation on (default) each level's scores are first centred and
    scaled by its training-score statistics, which makes fixed weights
    meaningful across levels of very different score magnitudes; turn it off
    to weight the raw scores. Rankings are invariant to scaling all weights
    by a positive constant.
    """
    if not levels:
        raise ValueError("no levels to fuse")
    if weights is None:
        weights = [lv.weight for lv in levels]
    if len(weights) != len(levels):
        raise ValueError(f"{len(levels)} levels but {len(weights)} weights")
    lengths = {len(lv.test) for lv in levels}
    if len(lengths) != 1:
        raise ValueError(f"levels have mismatched sample counts {sorted(lengths)}")
    fused = np.zeros(lengths.pop())
    for lv, w in zip(levels, weights):
        scores = lv.test
        if normalize:
            mu = lv.train.mean()
            sd = lv.train.std()
            scores = (scores - mu) / (sd if sd > 0 else 1.0)
        fused = fused + w * scores
    return fused
