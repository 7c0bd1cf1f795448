"""SETF feature extraction from a frozen wide residual backbone."""

from .extract import ExtractorConfig, extract
from .setf import read_grid, read_header, write_grid

__all__ = ["ExtractorConfig", "extract", "read_grid", "read_header", "write_grid"]
