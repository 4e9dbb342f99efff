"""Void filling and iterative elevation-artefact removal.

Missing pixels are filled with the mean of the valid pixels in a centered
square window. Artefacts are found with a windowed standard score: the grid
is tiled with overlapping square windows, and inside each window a pixel
scores ``w_g * (h - median) / std``. ``w_g`` is an unnormalised Gaussian
(peak 1) centred on the window. Window statistics only use pixels that are
not excluded. :func:`refine_elevation` alternates detection and refilling
over a list of passes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from numpy.lib.stride_tricks import sliding_window_view
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_elevation, check_mask, check_odd_kernel
from .ingest import NODATA

logger = logging.getLogger(__name__)

SIGMA_FLOOR = 1e-9
# upper bound on window elements materialised at once in detect_outliers
_CHUNK_ELEMENTS = 4_000_000


class UnrecoverableSampleError(Exception):
    """The grid has no valid pixel to fill from."""


@dataclass(frozen=True)
class FillConfig:
    kernel: int = 31

    def __post_init__(self):
        check_odd_kernel(self.kernel)


@dataclass(frozen=True)
class OutlierPass:
    threshold: float
    window: int
    overlap: int
    spread: float

    def __post_init__(self):
        if self.window < 2:
            raise ValueError("window must be >= 2")
        if not 0 < self.overlap < self.window:
            raise ValueError(f"overlap must satisfy 0 < overlap < window, got {self.overlap}")
        if self.threshold <= 0 or self.spread <= 0:
            raise ValueError("threshold and spread must be > 0")

    @property
    def step(self) -> int:
        return self.window - self.overlap


def default_passes() -> tuple[OutlierPass, ...]:
    return tuple(
        OutlierPass(t, w, o, s)
        for t, w, o, s in zip((1.2, 1.1, 0.9), (10, 45, 90), (5, 20, 30), (0.2, 0.21, 0.27))
    )


@dataclass(frozen=True)
class OutlierConfig:
    passes: tuple[OutlierPass, ...] = field(default_factory=default_passes)
    two_sided: bool = True

    @classmethod
    def from_lists(cls, thresholds, windows, overlaps, spreads, two_sided=True) -> OutlierConfig:
        lengths = {len(thresholds), len(windows), len(overlaps), len(spreads)}
        if len(lengths) != 1:
            raise ValueError("outlier pass lists must all have the same length")
        passes = tuple(
            OutlierPass(float(t), int(w), int(o), float(s))
            for t, w, o, s in zip(thresholds, windows, overlaps, spreads)
        )
        return cls(passes, bool(two_sided))


# ---------------------------------------------------------------------------
# Filling
# ---------------------------------------------------------------------------


def _box_sum(a: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a centered ``(2r+1)^2`` window, clipped at the grid edges."""
    size = 2 * radius + 1
    return ndimage.uniform_filter(a, size=size, mode="constant", cval=0.0) * (size * size)


# crops larger than this are filled block by block, touching only the hole front
_BLOCK = 128
_DENSE_LIMIT = 1024 * 1024


def _fill_pass_dense(out: np.ndarray, hole: np.ndarray, radius: int) -> np.ndarray:
    valid = ~hole
    sums = _box_sum(np.where(valid, out, 0.0).astype(np.float64), radius)
    counts = np.rint(_box_sum(valid.astype(np.float64), radius))
    fillable = hole & (counts > 0)
    out[fillable] = sums[fillable] / counts[fillable]
    return fillable


def _fill_pass_blocks(out: np.ndarray, hole: np.ndarray, radius: int) -> np.ndarray:
    height, width = hole.shape
    nby, nbx = -(-height // _BLOCK), -(-width // _BLOCK)
    padded = np.zeros((nby * _BLOCK, nbx * _BLOCK), dtype=bool)
    padded[:height, :width] = hole
    blocks = padded.reshape(nby, _BLOCK, nbx, _BLOCK)
    has_hole = blocks.any(axis=(1, 3))
    padded[:height, :width] = ~hole
    has_valid = blocks.any(axis=(1, 3))
    # radius < block size, so a valid source lies in the block or a neighbour
    near_valid = ndimage.maximum_filter(has_valid, size=3, mode="constant", cval=False)
    updates = []
    for by, bx in zip(*np.nonzero(has_hole & near_valid)):
        y0, x0 = by * _BLOCK, bx * _BLOCK
        y1, x1 = min(y0 + _BLOCK, height), min(x0 + _BLOCK, width)
        cy0, cx0 = max(y0 - radius, 0), max(x0 - radius, 0)
        cy1, cx1 = min(y1 + radius, height), min(x1 + radius, width)
        h = hole[cy0:cy1, cx0:cx1]
        valid = ~h
        sums = _box_sum(np.where(valid, out[cy0:cy1, cx0:cx1], 0.0).astype(np.float64), radius)
        counts = np.rint(_box_sum(valid.astype(np.float64), radius))
        inner = np.s_[y0 - cy0:y1 - cy0, x0 - cx0:x1 - cx0]
        fillable = h[inner] & (counts[inner] > 0)
        if fillable.any():
            updates.append((y0, x0, fillable, sums[inner][fillable] / counts[inner][fillable]))
    # apply after all blocks so every block reads the state from the start of the pass
    filled = np.zeros(hole.shape, dtype=bool)
    for y0, x0, fillable, values in updates:
        region = np.s_[y0:y0 + fillable.shape[0], x0:x0 + fillable.shape[1]]
        out[region][fillable] = values
        filled[region] |= fillable
    return filled


def _fill_region(out: np.ndarray, hole: np.ndarray, radius: int) -> int:
    """Fill ``hole`` in place inside ``out`` (both views of one crop); returns passes."""
    passes = 0
    while hole.any():
        rows = np.flatnonzero(hole.any(axis=1))
        cols = np.flatnonzero(hole.any(axis=0))
        r0, r1 = max(rows[0] - radius, 0), min(rows[-1] + radius + 1, hole.shape[0])
        c0, c1 = max(cols[0] - radius, 0), min(cols[-1] + radius + 1, hole.shape[1])
        h = hole[r0:r1, c0:c1]
        block = out[r0:r1, c0:c1]
        if h.size > _DENSE_LIMIT and radius < _BLOCK:
            filled = _fill_pass_blocks(block, h, radius)
        else:
            filled = _fill_pass_dense(block, h, radius)
        if not filled.any():
            raise UnrecoverableSampleError("no valid elevation pixel to fill from")
        h &= ~filled
        passes += 1
    return passes


def fill_missing(dem: np.ndarray, missing: np.ndarray, cfg: FillConfig = FillConfig()) -> np.ndarray:
    """Replace ``missing`` pixels with the mean of valid pixels around them.

    Pixels whose window holds no valid pixel are filled in later passes, which
    may draw on values filled earlier. Valid pixels are returned bitwise
    unchanged. Means are computed in float64 and stored in the input's
    precision (float64 stays float64, anything else becomes float32).

    Raises:
        UnrecoverableSampleError: if no pixel is valid.
    """
    # float64 input stays float64; everything else is stored as float32
    dem = np.asarray(dem)
    if dem.dtype != np.float64:
        dem = check_elevation(dem)
    elif dem.ndim != 2:
        raise ValueError(f"dem must be 2-D, got shape {dem.shape}")
    missing = check_mask(missing, dem.shape, "missing")
    out = dem.copy()
    if not missing.any():
        return out
    if missing.all():
        raise UnrecoverableSampleError("no valid elevation pixel to fill from")
    radius = cfg.kernel // 2

    # Holes further than 2r apart never see each other's pixels, so groups of
    # the r-dilated mask can be filled independently on their own crops.
    reach = ndimage.maximum_filter(missing, size=2 * radius + 1, mode="constant", cval=False)
    labels, _ = ndimage.label(reach)
    passes = 0
    for index, region in enumerate(ndimage.find_objects(labels), start=1):
        hole = (labels[region] == index) & missing[region]
        passes = max(passes, _fill_region(out[region], hole, radius))
    logger.debug("filled %d pixels in up to %d passes", int(missing.sum()), passes)
    return out


# ---------------------------------------------------------------------------
# Outlier detection
# ---------------------------------------------------------------------------


def gaussian_weights(window: int, spread: float, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Unnormalised 2-D Gaussian with peak 1 at the window center.

    The standard deviation is ``spread * window`` pixels. ``shape`` crops the
    kernel to a smaller window (used when the grid is smaller than
    ``window``); the center then sits in the middle of the cropped window.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    wy, wx = shape if shape is not None else (window, window)
    sd = spread * window
    dy = np.arange(wy) - (wy - 1) / 2
    dx = np.arange(wx) - (wx - 1) / 2
    return np.exp(-(dy[:, None] ** 2 + dx[None, :] ** 2) / (2.0 * sd * sd))


def window_starts(n: int, window: int, step: int) -> tuple[np.ndarray, int]:
    """Window start offsets along one axis; the last window sits flush with the edge.

    Returns ``(starts, extent)``; ``extent`` is shorter than ``window`` only when
    the axis itself is shorter.
    """
    if n <= window:
        return np.array([0]), n
    starts = list(range(0, n - window + 1, step))
    if starts[-1] != n - window:
        starts.append(n - window)
    return np.array(starts), window


def window_stats(values: np.ndarray, excluded: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Median, population std and count of non-excluded entries along the last axis."""
    valid = ~excluded
    count = valid.sum(axis=-1)
    ordered = np.sort(np.where(excluded, np.inf, values), axis=-1)
    safe = np.maximum(count, 1)
    lo = np.take_along_axis(ordered, ((safe - 1) // 2)[..., None], axis=-1)[..., 0]
    hi = np.take_along_axis(ordered, (safe // 2)[..., None], axis=-1)[..., 0]
    median = (lo + hi) / 2
    masked = np.where(valid, values, 0.0)
    mean = masked.sum(axis=-1) / safe
    dev = np.where(valid, values - mean[..., None], 0.0)
    std = np.sqrt((dev * dev).sum(axis=-1) / safe)
    return median, std, count


def detect_outliers(
    dem: np.ndarray,
    excluded: np.ndarray | None,
    pass_: OutlierPass,
    two_sided: bool = True,
) -> np.ndarray:
    """Flag pixels whose Gaussian-weighted windowed standard score exceeds the threshold.

    Flags from overlapping windows are OR-combined. Windows with fewer than
    two usable pixels, or a deviation below ``SIGMA_FLOOR``, flag nothing.
    Excluded pixels are never flagged and never enter the statistics.
    """
    dem = check_elevation(dem)
    excluded = check_mask(excluded, dem.shape, "excluded")
    height, width = dem.shape
    flags = np.zeros(dem.shape, dtype=bool)
    if dem.size == 0:
        return flags

    ys, wy = window_starts(height, pass_.window, pass_.step)
    xs, wx = window_starts(width, pass_.window, pass_.step)
    weights = gaussian_weights(pass_.window, pass_.spread, (wy, wx)).ravel()

    values_view = sliding_window_view(dem.astype(np.float64), (wy, wx))
    excluded_view = sliding_window_view(excluded, (wy, wx))
    per_row = len(xs) * wy * wx
    rows_per_chunk = max(1, _CHUNK_ELEMENTS // per_row)

    for start in range(0, len(ys), rows_per_chunk):
        ychunk = ys[start:start + rows_per_chunk]
        vals = values_view[ychunk][:, xs].reshape(len(ychunk), len(xs), wy * wx)
        exc = excluded_view[ychunk][:, xs].reshape(len(ychunk), len(xs), wy * wx)
        median, std, count = window_stats(vals, exc)
        usable = (count >= 2) & (std >= SIGMA_FLOOR)
        if not usable.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            z = weights * (vals - median[..., None]) / std[..., None]
        if two_sided:
            z = np.abs(z)
        hit = (z > pass_.threshold) & ~exc & usable[..., None]
        wi, wj, k = np.nonzero(hit)
        if wi.size:
            flags[ychunk[wi] + k // wx, xs[wj] + k % wx] = True
    return flags


def refine_elevation(
    dem: np.ndarray,
    nodata: np.ndarray,
    cfg: OutlierConfig = OutlierConfig(),
    fill: FillConfig = FillConfig(),
) -> tuple[np.ndarray, np.ndarray]:
    """Run the detect-and-refill loop over ``cfg.passes``.

    Returns the refilled DEM and the accumulated outlier mask. Pixels marked
    in ``nodata`` are never reported as outliers.
    """
    dem = check_elevation(dem)
    nodata = check_mask(nodata, dem.shape, "nodata")
    outliers = np.zeros(dem.shape, dtype=bool)
    current = dem.copy()
    for i, pass_ in enumerate(cfg.passes):
        flagged = detect_outliers(current, nodata | outliers, pass_, cfg.two_sided)
        outliers |= flagged
        logger.debug("outlier pass %d: %d new pixels", i, int(flagged.sum()))
        current = fill_missing(current, nodata | outliers, fill)
    return current, outliers


class ElevationRepairer(TransformerMixin, BaseEstimator):
    """Fill voids and remove artefacts from a DEM marked with a nodata sentinel.

    ``fit`` records the masks found on the fitted DEM (``nodata_mask_``,
    ``outlier_mask_``); ``transform`` returns the repaired DEM for any input.

    Parameters
    ----------
    kernel : int, default=31
        Odd fill window size in pixels.
    thresholds, windows, overlaps, spreads : sequences
        Per-pass detection parameters.
    two_sided : bool, default=True
        Flag deep wells as well as spikes.
    sentinel : float, default=-32767.0
        Value marking missing elevations.
    """

    def __init__(self, kernel=31, thresholds=(1.2, 1.1, 0.9), windows=(10, 45, 90),
                 overlaps=(5, 20, 30), spreads=(0.2, 0.21, 0.27), two_sided=True,
                 sentinel=NODATA):
        self.kernel = kernel
        self.thresholds = thresholds
        self.windows = windows
        self.overlaps = overlaps
        self.spreads = spreads
        self.two_sided = two_sided
        self.sentinel = sentinel

    def _configs(self):
        fill = FillConfig(self.kernel)
        outlier = OutlierConfig.from_lists(
            self.thresholds, self.windows, self.overlaps, self.spreads, self.two_sided
        )
        return fill, outlier

    def _repair(self, dem):
        dem = check_elevation(dem)
        fill, outlier = self._configs()
        nodata = dem == np.float32(self.sentinel)
        filled = fill_missing(dem, nodata, fill)
        repaired, outliers = refine_elevation(filled, nodata, outlier, fill)
        return repaired, nodata, outliers

    def fit(self, X, y=None):
        repaired, self.nodata_mask_, self.outlier_mask_ = self._repair(X)
        self._fitted_input = np.asarray(X, dtype=np.float32)
        self._fitted_output = repaired
        return self

    def transform(self, X):
        if not hasattr(self, "outlier_mask_"):
            raise AttributeError("ElevationRepairer is not fitted; call fit first")
        X = check_elevation(X)
        if X.shape == self._fitted_input.shape and np.array_equal(X, self._fitted_input):
            return self._fitted_output.copy()
        return self._repair(X)[0]
