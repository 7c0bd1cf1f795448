"""Experiment configuration: TOML-like config files, defaults, flag overrides.

Config files are plain key = value text (strings quoted, lists in brackets,
booleans true/false, # comments); dotted keys such as raw_pixels.weight
override one image level's settings. Values given on the command line win
over the file. Built-in defaults: time series use
tau 9, 10 pyramid levels, 100 projections, 20 quantile bins and k = 1; images
use 5 uniform bins with 1000 projections on the backbone block levels, 10
projections, no whitening and 16 averaged repetitions on the raw-pixel level,
crop ratios (1.0, 0.7, 0.5, 0.33) with stride 0.25 and level weights
(1, 1, 0.1). Shrinkage is 0.1 everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .imagesets import (
    BLOCK3,
    BLOCK4,
    DEFAULT_CROP_RATIOS,
    DEFAULT_CROP_STRIDE,
    RAW_PIXELS,
    LevelConfig,
    default_level_configs,
)
from .pipeline import SetPipelineConfig
from .sets import CUMULATIVE, QUANTILE, UNIFORM
from .timeseries import PyramidConfig

TIMESERIES = "timeseries"
IMAGE = "image"
SETS = "sets"

_PIPELINES = (TIMESERIES, IMAGE, SETS)
_DATASETS = ("manifest", "synthetic", "equal_mean")


class ConfigError(ValueError):
    """Invalid configuration: bad file syntax, unknown keys, bad values."""


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse TOML-like key = value lines into a (possibly nested) dict."""
    result: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        try:
            parsed = _parse_value(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}")
        target = result
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
            if not isinstance(target, dict):
                raise ConfigError(f"{source}:{lineno}: {key!r} conflicts with a scalar key")
        target[parts[-1]] = parsed
    return result


def _strip_comment(line: str) -> str:
    out = []
    in_quote = False
    for ch in line:
        if ch == '"':
            in_quote = not in_quote
        if ch == "#" and not in_quote:
            break
        out.append(ch)
    return "".join(out)


def _parse_value(text: str):
    if text == "":
        raise ValueError("missing value")
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_parse_value(part.strip()) for part in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"cannot parse value {text!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration for one experiment."""

    pipeline: str = TIMESERIES
    dataset: str = "manifest"
    manifest: str = ""
    data_dir: str = ""
    seed: int = 0
    jobs: int = 1

    projections: int = 100
    bins: int = 20
    edge_mode: str = QUANTILE
    descriptor: str = CUMULATIVE
    k: int = 1
    shrinkage: float = 0.1

    tau: int = 9
    levels: int = 10
    min_length: int = 0
    max_length: int = 0

    crop_ratios: tuple = DEFAULT_CROP_RATIOS
    stride: float = DEFAULT_CROP_STRIDE
    weights: tuple = ()
    normalize_fusion: bool = True
    image_levels: tuple = (BLOCK3, BLOCK4, RAW_PIXELS)
    level_overrides: dict = field(default_factory=dict)

    synthetic_train: int = 200
    synthetic_test: int = 100

    def pipeline_config(self) -> SetPipelineConfig:
        return SetPipelineConfig(
            n_projections=self.projections,
            n_bins=self.bins,
            edge_mode=self.edge_mode,
            descriptor=self.descriptor,
            k=self.k,
            shrinkage=self.shrinkage,
        )

    def pyramid_config(self) -> PyramidConfig:
        return PyramidConfig(tau=self.tau, levels=self.levels)

    def level_configs(self) -> dict[str, LevelConfig]:
        """Per-level image settings: built-in defaults plus dotted-key overrides."""
        configs = default_level_configs()
        out = {}
        for tag in self.image_levels:
            base = configs.get(tag, LevelConfig(n_projections=self.projections))
            base = replace(base, n_bins=self.bins, edge_mode=self.edge_mode,
                           k=self.k, shrinkage=self.shrinkage, descriptor=self.descriptor)
            over = self.level_overrides.get(tag, {})
            known = {"projections": "n_projections", "bins": "n_bins", "edge_mode": "edge_mode",
                     "whitening": "whitening", "repetitions": "repetitions", "weight": "weight",
                     "k": "k", "shrinkage": "shrinkage", "descriptor": "descriptor"}
            fields = {}
            for key, value in over.items():
                if key not in known:
                    raise ConfigError(f"unknown level option {tag}.{key}")
                fields[known[key]] = value
            out[tag] = replace(base, **fields)
        if self.weights:
            if len(self.weights) != len(self.image_levels):
                raise ConfigError(
                    f"{len(self.weights)} weights for {len(self.image_levels)} image levels"
                )
            for tag, w in zip(self.image_levels, self.weights):
                out[tag] = replace(out[tag], weight=float(w))
        return out


_IMAGE_DEFAULTS = {"bins": 5, "edge_mode": UNIFORM, "projections": 1000}
_SCALAR_KEYS = {
    "pipeline": str, "dataset": str, "manifest": str, "data_dir": str,
    "seed": int, "jobs": int, "projections": int, "bins": int,
    "edge_mode": str, "descriptor": str, "k": int, "shrinkage": float,
    "tau": int, "levels": int, "min_length": int, "max_length": int,
    "stride": float, "normalize_fusion": bool,
    "synthetic_train": int, "synthetic_test": int,
}
_LIST_KEYS = {"crop_ratios": float, "weights": float, "image_levels": str}


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """Merge defaults, config-file values and flag overrides (flags win)."""
    merged: dict = {}
    level_overrides: dict = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if isinstance(value, dict):
                level_overrides.setdefault(key, {}).update(value)
            else:
                merged[key] = value

    pipeline = merged.get("pipeline", TIMESERIES)
    if pipeline not in _PIPELINES:
        raise ConfigError(f"unknown pipeline {pipeline!r} (choose from {', '.join(_PIPELINES)})")
    if pipeline == IMAGE:
        for key, value in _IMAGE_DEFAULTS.items():
            merged.setdefault(key, value)

    fields: dict = {"pipeline": pipeline, "level_overrides": level_overrides}
    for key, value in merged.items():
        if key == "pipeline":
            continue
        if key in _SCALAR_KEYS:
            caster = _SCALAR_KEYS[key]
            try:
                if caster is bool and not isinstance(value, bool):
                    raise ValueError("expected true/false")
                fields[key] = caster(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})")
        elif key in _LIST_KEYS:
            items = value if isinstance(value, (list, tuple)) else [value]
            try:
                fields[key] = tuple(_LIST_KEYS[key](v) for v in items)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {value!r} ({exc})")
        else:
            raise ConfigError(f"unknown config key {key!r}")

    cfg = ExperimentConfig(**fields)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.dataset not in _DATASETS:
        raise ConfigError(f"unknown dataset {cfg.dataset!r} (choose from {', '.join(_DATASETS)})")
    if cfg.dataset == "manifest" and not cfg.manifest:
        raise ConfigError("dataset = \"manifest\" needs a manifest path")
    if cfg.edge_mode not in (UNIFORM, QUANTILE):
        raise ConfigError(f"unknown edge_mode {cfg.edge_mode!r}")
    if cfg.projections < 1 or cfg.bins < 2 or cfg.k < 1 or cfg.jobs < 1:
        raise ConfigError("projections, k and jobs must be >= 1 and bins >= 2")
    if not 0.0 <= cfg.shrinkage <= 1.0:
        raise ConfigError(f"shrinkage must be in [0, 1], got {cfg.shrinkage}")
    if cfg.tau < 1 or cfg.levels < 1:
        raise ConfigError("tau and levels must be >= 1")
    if not 0.0 < cfg.stride <= 1.0:
        raise ConfigError(f"stride must be in (0, 1], got {cfg.stride}")
    for r in cfg.crop_ratios:
        if not 0.0 < r <= 1.0:
            raise ConfigError(f"crop ratio must be in (0, 1], got {r}")


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ExperimentConfig:
    file_values: dict = {}
    if path:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        file_values = parse_config_text(path.read_text(), source=str(path))
    return build_config(file_values, overrides)


def config_snapshot(cfg: ExperimentConfig) -> str:
    """Canonical key = value rendering embedded in every output."""
    lines = []
    for key in sorted(_SCALAR_KEYS):
        value = getattr(cfg, key)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = repr(value)
        lines.append(f"{key} = {rendered}")
    for key in sorted(_LIST_KEYS):
        items = getattr(cfg, key)
        rendered = ", ".join(f'"{v}"' if isinstance(v, str) else repr(v) for v in items)
        lines.append(f"{key} = [{rendered}]")
    for tag in sorted(cfg.level_overrides):
        for key in sorted(cfg.level_overrides[tag]):
            value = cfg.level_overrides[tag][key]
            rendered = ("true" if value else "false") if isinstance(value, bool) else repr(value)
            lines.append(f"{tag}.{key} = {rendered}")
    return "\n".join(lines) + "\n"
