"""Image folders -> SETF feature grids from a frozen wide residual backbone.

Per image: pad to a square with the dataset mean colour (so the padding is
zero after normalisation and the object's aspect ratio survives the resize),
resize to 224 x 224, normalise with the standard large-scale-pretraining
channel statistics, run the frozen backbone, and write the block-3 and
block-4 activation grids (plus optionally the raw 224 x 224 x 3 pixel grid)
as SETF files. A JSON manifest maps sample ids to files, labels and splits.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from . import setf

logger = logging.getLogger(__name__)

IMAGE_SIZE = 224
MEAN = (0.485, 0.456, 0.406)
STD = (0.229, 0.224, 0.225)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")

NORMAL_DIR_NAMES = {"normal", "good"}


@dataclass
class ExtractorConfig:
    input_dir: Path
    output_dir: Path
    backbone: str = "wide_resnet50_2"
    blocks: tuple = (3, 4)
    include_raw_pixels: bool = True
    weights: str = "pretrained"  # pretrained | random | path to a state dict
    seed: int = 0  # weight init seed for weights = "random"

    def __post_init__(self):
        self.input_dir = Path(self.input_dir)
        self.output_dir = Path(self.output_dir)
        for b in self.blocks:
            if b not in (3, 4):
                raise ValueError(f"only blocks 3 and 4 are exposed, got {b}")


def load_backbone(config: ExtractorConfig) -> torch.nn.Module:
    """Build the frozen backbone on CPU in eval mode."""
    import torchvision.models

    if config.backbone != "wide_resnet50_2":
        raise ValueError(f"unsupported backbone {config.backbone!r}")
    if config.weights == "pretrained":
        try:
            weights = torchvision.models.Wide_ResNet50_2_Weights.IMAGENET1K_V1
            model = torchvision.models.wide_resnet50_2(weights=weights)
        except Exception as exc:  # download failure in offline environments
            raise RuntimeError(
                "could not load pretrained weights (offline?); pass "
                "--weights random or --weights /path/to/state_dict.pt"
            ) from exc
    elif config.weights == "random":
        torch.manual_seed(config.seed)
        model = torchvision.models.wide_resnet50_2(weights=None)
    else:
        model = torchvision.models.wide_resnet50_2(weights=None)
        state = torch.load(config.weights, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model


def preprocess(image: Image.Image) -> tuple[np.ndarray, torch.Tensor]:
    """Pad to square with the mean colour, resize, normalise.

    Returns (raw_pixels as HxWx3 float32 in [0, 1], normalised 1x3xHxW tensor).
    """
    image = image.convert("RGB")
    w, h = image.size
    side = max(w, h)
    if w != h:
        pad_color = tuple(int(round(c * 255.0)) for c in MEAN)
        canvas = Image.new("RGB", (side, side), pad_color)
        canvas.paste(image, ((side - w) // 2, (side - h) // 2))
        image = canvas
    image = image.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR)
    raw = np.asarray(image, dtype=np.float32) / 255.0  # H x W x 3
    tensor = torch.from_numpy(raw.transpose(2, 0, 1)).unsqueeze(0)
    normalised = (tensor - torch.tensor(MEAN).view(1, 3, 1, 1)) / torch.tensor(STD).view(1, 3, 1, 1)
    return raw, normalised


def compute_grids(model: torch.nn.Module, config: ExtractorConfig,
                  batch: torch.Tensor) -> dict[str, np.ndarray]:
    """Run the frozen backbone and return level tag -> (H, W, D) grid."""
    captured: dict[str, torch.Tensor] = {}
    hooks = []
    for b in config.blocks:
        layer = getattr(model, f"layer{b}")
        hooks.append(layer.register_forward_hook(
            lambda mod, inp, out, name=f"block{b}": captured.__setitem__(name, out)
        ))
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for h in hooks:
            h.remove()
    grids = {}
    for name, tensor in captured.items():
        # (1, D, H, W) -> (H, W, D); D comes from the backbone, never assumed
        grids[name] = tensor[0].permute(1, 2, 0).contiguous().numpy().astype(np.float32)
    return grids


def discover_images(input_dir: Path) -> list[tuple[Path, str, int | None]]:
    """(path, split, label) for every image under the input directory.

    Images under train/ go to the training split; images under test/ go to
    the test split, with a parent directory named 'good' or 'normal' meaning
    label 0 and any other test subdirectory meaning label 1. A flat directory
    of images becomes the training split.
    """
    found = []
    for path in sorted(input_dir.rglob("*")):
        if not path.is_file() or path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        rel = path.relative_to(input_dir)
        parts = [p.lower() for p in rel.parts[:-1]]
        if parts and parts[0] == "test":
            label = None
            if len(parts) > 1:
                label = 0 if parts[1] in NORMAL_DIR_NAMES else 1
            found.append((path, "test", label))
        else:
            found.append((path, "train", None))
    return found


def extract(config: ExtractorConfig) -> Path:
    """Run the extraction; returns the manifest path."""
    images = discover_images(config.input_dir)
    if not images:
        raise FileNotFoundError(f"no images found under {config.input_dir}")
    model = load_backbone(config)
    config.output_dir.mkdir(parents=True, exist_ok=True)

    level_tags = [f"block{b}" for b in config.blocks]
    if config.include_raw_pixels:
        level_tags.append("raw_pixels")
    for tag in level_tags:
        (config.output_dir / tag).mkdir(exist_ok=True)

    samples = []
    skipped = []
    for path, split, label in images:
        try:
            image = Image.open(path)
            raw, batch = preprocess(image)
        except Exception as exc:
            logger.warning("skipping unreadable image %s: %s", path, exc)
            skipped.append({"file": str(path), "reason": str(exc)})
            continue
        sample_id = path.stem
        grids = compute_grids(model, config, batch)
        if config.include_raw_pixels:
            grids["raw_pixels"] = raw
        files = {}
        for tag, grid in grids.items():
            rel = f"{tag}/{sample_id}.setf"
            setf.write_grid(grid, config.output_dir / rel)
            files[tag] = rel
        samples.append({
            "sample_id": sample_id,
            "split": split,
            "label": label,
            "files": files,
        })
        logger.info("extracted %s (%s): %s", sample_id, split,
                     " ".join(f"{t}={grids[t].shape}" for t in sorted(grids)))

    manifest = {
        "version": 1,
        "backbone": config.backbone,
        "weights": config.weights,
        "samples": samples,
    }
    if skipped:
        manifest["skipped"] = skipped
    manifest_path = config.output_dir / "manifest.json"
    tmp = manifest_path.with_name(".manifest.json.tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    tmp.replace(manifest_path)
    return manifest_path
