"""Curation of ortho/DEM raster pairs into patch datasets with leakage-free splits."""

from .grid import GeoFootprint, RasterSample, grid_read, grid_write, resample
from .ingest import load_sample, save_sample, select_sample
from .repair import detect_outliers, fill_missing, refine_elevation
from .verticalize import estimate_rotation, verticalize

__version__ = "0.1.0"

__all__ = [
    "GeoFootprint", "RasterSample", "grid_read", "grid_write", "resample",
    "load_sample", "save_sample", "select_sample",
    "detect_outliers", "fill_missing", "refine_elevation",
    "estimate_rotation", "verticalize",
]
