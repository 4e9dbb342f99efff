"""Dataset statistics as plot-ready tables.

Per-patch summaries (elevation moments, masked fraction, mean slope and
centroid position) plus histograms of sampled elevation values in metric
and per-patch standardised space, split by dataset split.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .patching import Patch
from .rng import Xoshiro256, derive_seed


@dataclass(frozen=True)
class StatsConfig:
    pixels_per_patch: int = 10000
    histogram_bins: int = 256
    elevation_clip: tuple[float, float] = (-5000.0, 5000.0)
    standardized_clip: tuple[float, float] = (-4.0, 4.0)
    pixel_spacing: float = 6.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.pixels_per_patch < 1 or self.pixels_per_patch > 518 * 518:
            raise ValueError("pixels_per_patch must lie in [1, 518*518]")
        if self.histogram_bins < 2:
            raise ValueError("histogram_bins must be >= 2")
        if self.pixel_spacing <= 0:
            raise ValueError("pixel_spacing must be > 0")


@dataclass(frozen=True)
class PatchStats:
    mean: float
    stddev: float
    masked_fraction: float
    mean_slope: float
    lat: float = float("nan")
    lon: float = float("nan")


def mean_slope(dem: np.ndarray, pixel_spacing: float = 6.0) -> float:
    """Mean slope in degrees over interior pixels, central differences."""
    h = dem.astype(np.float64)
    if h.shape[0] < 3 or h.shape[1] < 3:
        return 0.0
    gy = (h[2:, 1:-1] - h[:-2, 1:-1]) / (2 * pixel_spacing)
    gx = (h[1:-1, 2:] - h[1:-1, :-2]) / (2 * pixel_spacing)
    return float(np.degrees(np.arctan(np.hypot(gx, gy))).mean())


def patch_stats(patch: Patch, cfg: StatsConfig = StatsConfig(), centroid: tuple[float, float] | None = None) -> PatchStats:
    dem = patch.dem.astype(np.float64)
    masked = float(np.count_nonzero(patch.invalid_mask | patch.outlier_mask)) / dem.size
    lat, lon = centroid if centroid is not None else (float("nan"), float("nan"))
    return PatchStats(float(dem.mean()), float(dem.std()), masked, mean_slope(dem, cfg.pixel_spacing), lat, lon)


def sample_pixels(patch: Patch, count: int, seed: int) -> np.ndarray:
    """Flat pixel indices drawn without replacement, seeded per patch key."""
    rng = Xoshiro256(derive_seed(seed, *patch.key))
    return rng.choice(patch.dem.size, min(count, patch.dem.size))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, low: float, high: float, bins: int) -> Histogram:
        return cls(np.linspace(low, high, bins + 1), np.zeros(bins, dtype=np.int64))

    def add(self, values: np.ndarray) -> None:
        # out-of-range values land in the edge bins so no sample is dropped
        clipped = np.clip(values, self.edges[0], self.edges[-1])
        counts, _ = np.histogram(clipped, bins=self.edges)
        self.counts += counts

    def merge(self, other: Histogram) -> None:
        self.counts += other.counts

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ElevationHistograms:
    metric: dict[str, Histogram] = field(default_factory=dict)
    standardized: dict[str, Histogram] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)
    sampled: dict[str, int] = field(default_factory=dict)


def elevation_histograms(patches, cfg: StatsConfig = StatsConfig(), splits=None) -> ElevationHistograms:
    """Histograms of sampled elevations per split.

    ``patches`` is an iterable of :class:`Patch`; ``splits`` an optional
    parallel iterable of split labels (default ``"all"``). Patches with zero
    deviation contribute to the metric table only and are counted in
    ``skipped``.
    """
    out = ElevationHistograms()
    lo_m, hi_m = cfg.elevation_clip
    lo_s, hi_s = cfg.standardized_clip
    if splits is None:
        splits = iter(lambda: "all", None)
    for patch, split in zip(patches, splits):
        if split not in out.metric:
            out.metric[split] = Histogram.empty(lo_m, hi_m, cfg.histogram_bins)
            out.standardized[split] = Histogram.empty(lo_s, hi_s, cfg.histogram_bins)
            out.skipped[split] = 0
            out.sampled[split] = 0
        dem = patch.dem.astype(np.float64)
        values = dem.ravel()[sample_pixels(patch, cfg.pixels_per_patch, cfg.rng_seed)]
        out.metric[split].add(values)
        out.sampled[split] += values.size
        sigma = dem.std()
        if sigma <= 0:
            out.skipped[split] += 1
            continue
        out.standardized[split].add((values - dem.mean()) / sigma)
    return out


def patch_centroid(row0: int, col0: int, size: int, sample_shape: tuple[int, int], footprint) -> tuple[float, float]:
    """Lat/lon of a patch centre, mapping rows north to south and columns west to east."""
    height, width = sample_shape
    fy = (row0 + size / 2) / height
    fx = (col0 + size / 2) / width
    lat = footprint.lat_max - fy * (footprint.lat_max - footprint.lat_min)
    lon = footprint.lon_min + fx * (footprint.lon_max - footprint.lon_min)
    return lat, lon


def histogram_rows(hists: dict[str, Histogram]) -> list[dict]:
    rows = []
    for split in sorted(hists):
        h = hists[split]
        for left, right, count in zip(h.edges[:-1], h.edges[1:], h.counts):
            rows.append({"bin_left": float(left), "bin_right": float(right), "count": int(count), "split": split})
    return rows


def value_histogram(values, low: float, high: float, bins: int) -> Histogram:
    h = Histogram.empty(low, high, bins)
    h.add(np.asarray(values, dtype=np.float64))
    return h


__all__ = [
    "StatsConfig", "PatchStats", "Histogram", "ElevationHistograms", "mean_slope",
    "patch_stats", "elevation_histograms", "sample_pixels", "patch_centroid",
    "histogram_rows", "value_histogram",
]

