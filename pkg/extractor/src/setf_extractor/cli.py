"""Command line wrapper around the extractor."""

from __future__ import annotations

import argparse
import logging
import sys

from .extract import ExtractorConfig, extract


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="setf-extract",
        description="Extract SETF feature grids from an image folder with a frozen "
                    "wide residual backbone.",
    )
    parser.add_argument("--input", required=True, help="image directory "
                        "(train/ and test/<label>/ subdirectories, or flat)")
    parser.add_argument("--output", required=True, help="output directory for SETF files")
    parser.add_argument("--blocks", default="3,4", help="residual blocks to export")
    parser.add_argument("--no-raw-pixels", action="store_true",
                        help="skip the raw 224x224x3 pixel grids")
    parser.add_argument("--weights", default="pretrained",
                        help="pretrained | random | path to a state dict")
    parser.add_argument("--seed", type=int, default=0, help="weight seed for --weights random")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        blocks = tuple(int(b) for b in args.blocks.split(",") if b.strip())
        config = ExtractorConfig(
            input_dir=args.input,
            output_dir=args.output,
            blocks=blocks,
            include_raw_pixels=not args.no_raw_pixels,
            weights=args.weights,
            seed=args.seed,
        )
        manifest = extract(config)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"manifest: {manifest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
