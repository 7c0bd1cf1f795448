"""JSON dataset manifests: sample_id -> files, label, split.

The same schema serves both front ends; time-series manifests point their
single file entry at a per-sample CSV under the key "series", image manifests
carry one file per representation level (block3, block4, raw_pixels). Paths
are stored relative to the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_VERSION = 1

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class ManifestSample:
    sample_id: str
    split: str  # train | test
    label: int | None  # 0 normal, 1 anomalous, None unknown
    files: dict = field(default_factory=dict)  # level tag -> relative path


@dataclass(frozen=True)
class Manifest:
    samples: tuple
    root: Path

    def split(self, name: str) -> list[ManifestSample]:
        return [s for s in self.samples if s.split == name]

    def resolve(self, sample: ManifestSample, tag: str) -> Path:
        try:
            rel = sample.files[tag]
        except KeyError:
            raise KeyError(f"sample {sample.sample_id!r} has no file for level {tag!r}")
        return self.root / rel

    def level_tags(self) -> list[str]:
        tags: list[str] = []
        for s in self.samples:
            for t in s.files:
                if t not in tags:
                    tags.append(t)
        return tags


def _coerce_label(raw) -> int | None:
    if raw is None:
        return None
    if isinstance(raw, bool):
        return int(raw)
    if isinstance(raw, (int, float)):
        return int(raw)
    text = str(raw).strip().lower()
    if text in ("", "none", "unknown"):
        return None
    if text in ("0", "normal", "good"):
        return 0
    if text in ("1", "anomalous", "anomaly", "bad"):
        return 1
    raise ValueError(f"unrecognised label {raw!r}")


def load_manifest(path, data_dir: str | os.PathLike | None = None) -> Manifest:
    """Read a manifest; `data_dir` (or $SINBAD_DATA_DIR) overrides the root
    against which file entries are resolved."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})")
    if not isinstance(doc, dict) or "samples" not in doc:
        raise ValueError(f"{path}: manifest must be an object with a 'samples' list")
    samples = []
    for i, entry in enumerate(doc["samples"]):
        try:
            sid = str(entry["sample_id"])
            split = str(entry["split"])
            files = dict(entry.get("files", {}))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"{path}: sample #{i} malformed ({exc})")
        if split not in (TRAIN, TEST):
            raise ValueError(f"{path}: sample {sid!r} has unknown split {split!r}")
        samples.append(ManifestSample(sid, split, _coerce_label(entry.get("label")), files))
    if data_dir is None:
        data_dir = os.environ.get("SINBAD_DATA_DIR")
    root = Path(data_dir) if data_dir else path.parent
    return Manifest(tuple(samples), root)


def save_manifest(samples: list[ManifestSample], path) -> None:
    doc = {
        "version": MANIFEST_VERSION,
        "samples": [
            {
                "sample_id": s.sample_id,
                "split": s.split,
                "label": s.label,
                "files": dict(s.files),
            }
            for s in samples
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
