"""Resolution matching, fixed-size tiling and patch rejection rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .grid import RasterSample, grid_read, grid_write, resample

PATCH_FILES = ("ortho.mgrd", "dem.mgrd", "mask_invalid.mgrd", "mask_outlier.mgrd")
REJECTION_REASONS = ("black", "imputed", "flat")


@dataclass(frozen=True)
class PatchConfig:
    patch_size: int = 518
    max_black_fraction: float = 0.10
    max_imputed_fraction: float = 0.15
    min_elev_std: float = 10.0
    black_threshold: int = 0

    def __post_init__(self):
        if self.patch_size < 32:
            raise ValueError("patch_size must be >= 32")
        for name in ("max_black_fraction", "max_imputed_fraction"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.min_elev_std < 0:
            raise ValueError("min_elev_std must be >= 0")


@dataclass
class Patch:
    sample_id: str
    row0: int
    col0: int
    ortho: np.ndarray
    dem: np.ndarray
    invalid_mask: np.ndarray
    outlier_mask: np.ndarray
    rejection: frozenset = field(default_factory=frozenset)
    black_frac: float = float("nan")
    imputed_frac: float = float("nan")
    elev_std: float = float("nan")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.sample_id, self.row0, self.col0)

    @property
    def name(self) -> str:
        return f"{self.sample_id}_{self.row0}_{self.col0}"

    @property
    def accepted(self) -> bool:
        return not self.rejection


def match_resolution(sample: RasterSample) -> RasterSample:
    """Bring DEM and masks onto the ortho grid (bilinear DEM, nearest masks)."""
    height, width = sample.ortho.shape
    if sample.dem.shape == (height, width):
        return sample
    return sample.replace(
        dem=resample(sample.dem, width, height, "bilinear"),
        nodata_mask=resample(sample.nodata_mask, width, height, "nearest"),
        outlier_mask=resample(sample.outlier_mask, width, height, "nearest"),
    )


def tile(sample: RasterSample, cfg: PatchConfig = PatchConfig()) -> list[Patch]:
    """Non-overlapping tiles anchored at (0, 0); partial edge tiles are dropped."""
    if sample.dem.shape != sample.ortho.shape:
        raise ValueError("tile expects a resolution-matched sample")
    size = cfg.patch_size
    height, width = sample.ortho.shape
    patches = []
    for row0 in range(0, height - size + 1, size):
        for col0 in range(0, width - size + 1, size):
            window = np.s_[row0:row0 + size, col0:col0 + size]
            patches.append(Patch(
                sample.id, row0, col0,
                sample.ortho[window].copy(),
                sample.dem[window].copy(),
                sample.nodata_mask[window].copy(),
                sample.outlier_mask[window].copy(),
            ))
    return patches


def patch_fractions(patch: Patch, black_threshold: int = 0) -> tuple[float, float, float]:
    """Black fraction, imputed (invalid or outlier) fraction and population std of the DEM."""
    black = float(np.count_nonzero(patch.ortho <= black_threshold)) / patch.ortho.size
    imputed = float(np.count_nonzero(patch.invalid_mask | patch.outlier_mask)) / patch.dem.size
    std = float(patch.dem.astype(np.float64).std())
    return black, imputed, std


def select_patch(patch: Patch, cfg: PatchConfig = PatchConfig()) -> frozenset:
    """Return the set of rejection reasons (empty when the patch is accepted).

    Fractions are rejected strictly above their limits; flatness strictly below.
    The patch's ``rejection`` and fraction fields are updated in place.
    """
    black, imputed, std = patch_fractions(patch, cfg.black_threshold)
    reasons = set()
    if black > cfg.max_black_fraction:
        reasons.add("black")
    if imputed > cfg.max_imputed_fraction:
        reasons.add("imputed")
    if std < cfg.min_elev_std:
        reasons.add("flat")
    patch.black_frac, patch.imputed_frac, patch.elev_std = black, imputed, std
    patch.rejection = frozenset(reasons)
    return patch.rejection


def write_patch(patch: Patch, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, layer in zip(PATCH_FILES, (patch.ortho, patch.dem, patch.invalid_mask, patch.outlier_mask)):
        grid_write(layer, directory / name)
    return directory


def read_patch(directory: str | Path, sample_id: str, row0: int, col0: int) -> Patch:
    directory = Path(directory)
    layers = [grid_read(directory / name) for name in PATCH_FILES]
    return Patch(sample_id, row0, col0, *layers)


class PatchExtractor(TransformerMixin, BaseEstimator):
    """Turn a repaired sample into patches with rejection reasons filled in.

    ``transform`` returns every tile; filter on ``Patch.accepted`` for the kept
    ones. Set ``keep_rejected=False`` to drop rejected tiles directly.
    """

    def __init__(self, patch_size=518, max_black_fraction=0.10, max_imputed_fraction=0.15,
                 min_elev_std=10.0, keep_rejected=True):
        self.patch_size = patch_size
        self.max_black_fraction = max_black_fraction
        self.max_imputed_fraction = max_imputed_fraction
        self.min_elev_std = min_elev_std
        self.keep_rejected = keep_rejected

    def fit(self, X=None, y=None):
        self.config_ = PatchConfig(self.patch_size, self.max_black_fraction,
                                   self.max_imputed_fraction, self.min_elev_std)
        return self

    def transform(self, X: RasterSample) -> list[Patch]:
        if not hasattr(self, "config_"):
            self.fit()
        patches = tile(match_resolution(X), self.config_)
        for patch in patches:
            select_patch(patch, self.config_)
        if not self.keep_rejected:
            patches = [p for p in patches if p.accepted]
        return patches
