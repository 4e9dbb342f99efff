"""Border trimming and rotation of obliquely framed samples.

The terrain footprint of a raw sample is a tilted quadrilateral inside a black
frame. After an all-black border trim, the tilt is read off the right
triangle formed by the bottom-left image corner, the first non-black pixel
down the leftmost column (row ``y_left``) and the first non-black pixel along
the bottom row (column ``x_bottom``)::

    theta = arctan((H - y_left) / x_bottom),    tilt = pi/2 - theta

Those scans hit the footprint corners exactly only when the leftmost corner
sits in the upper half of the frame. Frames with ``y_left < H/2`` are
measured as they are and mirrored; the others are measured on their mirror
image and left as they are. Either way the content ends up tilted the same
way and is rotated counter-clockwise by the tilt. A second trim with a lower
black-ratio threshold then removes the interpolation wedges.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .grid import RasterSample, rotate_layer, rotated_shape
from .ingest import NODATA

logger = logging.getLogger(__name__)


class DegenerateSampleError(Exception):
    """Trimming removed the entire image."""


class RotationEstimationError(Exception):
    """The leftmost column or the bottom row holds no terrain."""


@dataclass(frozen=True)
class TrimConfig:
    tau_first: float = 1.0
    tau_second: float = 0.1
    black_threshold: int = 0

    def __post_init__(self):
        if not 0 < self.tau_second <= self.tau_first <= 1:
            raise ValueError("need 0 < tau_second <= tau_first <= 1")


@dataclass(frozen=True)
class VerticalizeResult:
    """Rotation estimate for one frame.

    ``alpha`` is the signed tilt of the content in the source frame in
    radians, counter-clockwise positive; ``|alpha|`` is the correction angle.
    """

    alpha: float
    mirrored: bool
    y_left: int
    x_bottom: int

    @property
    def alpha_degrees(self) -> float:
        return math.degrees(self.alpha)


NO_ROTATION = VerticalizeResult(0.0, False, 0, 0)


def black_pixels(ortho: np.ndarray, black_threshold: int = 0) -> np.ndarray:
    return ortho <= black_threshold


def trim_bounds(black: np.ndarray, tau: float) -> tuple[int, int, int, int]:
    """Bounds ``(top, bottom, left, right)`` (half-open) after iterative edge trimming.

    Among the four edge lines the one with the highest black ratio is dropped
    while that ratio is at least ``tau``; ties go top, bottom, left, right.
    """
    top, bottom = 0, black.shape[0]
    left, right = 0, black.shape[1]
    if tau >= 1.0:
        # a line is removed only when fully black, so the result is the
        # bounding box of non-black pixels
        content = ~black
        rows = np.flatnonzero(content.any(axis=1))
        cols = np.flatnonzero(content.any(axis=0))
        if rows.size == 0:
            raise DegenerateSampleError("image is entirely black")
        return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1

    # running counts of black pixels per row/column inside the current bounds
    row_black = black.sum(axis=1).astype(np.int64)
    col_black = black.sum(axis=0).astype(np.int64)
    while top < bottom and left < right:
        width, height = right - left, bottom - top
        ratios = (
            row_black[top] / width,
            row_black[bottom - 1] / width,
            col_black[left] / height,
            col_black[right - 1] / height,
        )
        # the blackest edge goes first, so side margins cannot make every row qualify
        edge = int(np.argmax(ratios))
        if ratios[edge] < tau:
            return top, bottom, left, right
        if edge == 0:
            col_black[left:right] -= black[top, left:right]
            top += 1
        elif edge == 1:
            col_black[left:right] -= black[bottom - 1, left:right]
            bottom -= 1
        elif edge == 2:
            row_black[top:bottom] -= black[top:bottom, left]
            left += 1
        else:
            row_black[top:bottom] -= black[top:bottom, right - 1]
            right -= 1
    raise DegenerateSampleError("trimming removed the whole image")


def _scaled(index: int, ratio: float, limit: int) -> int:
    return min(max(int(round(index * ratio)), 0), limit)


def crop_sample(sample: RasterSample, bounds: tuple[int, int, int, int]) -> RasterSample:
    """Crop all layers to ortho ``bounds``; DEM-resolution layers use scaled indices."""
    top, bottom, left, right = bounds
    oh, ow = sample.ortho.shape
    dh, dw = sample.dem.shape
    ry, rx = dh / oh, dw / ow
    dt, db = _scaled(top, ry, dh), _scaled(bottom, ry, dh)
    dl, dr = _scaled(left, rx, dw), _scaled(right, rx, dw)
    if db <= dt or dr <= dl:
        raise DegenerateSampleError("trimmed DEM is empty")
    return sample.replace(
        ortho=sample.ortho[top:bottom, left:right].copy(),
        dem=sample.dem[dt:db, dl:dr].copy(),
        nodata_mask=sample.nodata_mask[dt:db, dl:dr].copy(),
        outlier_mask=sample.outlier_mask[dt:db, dl:dr].copy(),
    )


def trim_black_border(sample: RasterSample, tau: float, black_threshold: int = 0) -> RasterSample:
    if sample.ortho.size == 0:
        raise DegenerateSampleError("empty sample")
    bounds = trim_bounds(black_pixels(sample.ortho, black_threshold), tau)
    if bounds == (0, sample.ortho.shape[0], 0, sample.ortho.shape[1]):
        return sample
    return crop_sample(sample, bounds)


def _corner_scan(content: np.ndarray) -> tuple[int, int]:
    left_col = np.flatnonzero(content[:, 0])
    bottom_row = np.flatnonzero(content[-1, :])
    if left_col.size == 0 or bottom_row.size == 0:
        raise RotationEstimationError("leftmost column or bottom row holds no terrain")
    return int(left_col[0]), int(bottom_row[0])


def estimate_rotation(ortho: np.ndarray, black_threshold: int = 0) -> VerticalizeResult:
    """Estimate the frame tilt from the corner scans of a border-trimmed ortho.

    Raises:
        RotationEstimationError: if the leftmost column or bottom row is black.
    """
    content = ~black_pixels(ortho, black_threshold)
    height = content.shape[0]
    y_left, x_bottom = _corner_scan(content)
    if y_left == 0 or x_bottom == 0:
        return VerticalizeResult(0.0, False, y_left, x_bottom)
    mirrored = y_left < height / 2
    if mirrored:
        y_meas, x_meas = y_left, x_bottom
    else:
        y_meas, x_meas = _corner_scan(content[:, ::-1])
        if x_meas == 0:
            return VerticalizeResult(0.0, False, y_left, x_bottom)
    theta = math.atan((height - y_meas) / x_meas)
    tilt = math.pi / 2 - theta
    return VerticalizeResult(tilt if mirrored else -tilt, mirrored, y_left, x_bottom)


def apply_verticalization(
    sample: RasterSample,
    res: VerticalizeResult,
    trim: TrimConfig = TrimConfig(),
    sentinel: float = NODATA,
) -> RasterSample:
    """Mirror (if flagged), rotate every layer by the recovered tilt, then re-trim.

    The expanded canvas is filled with black in the ortho, ``sentinel`` in the
    DEM and 1 in the nodata mask. The outlier mask is filled with 0 so the two
    masks stay disjoint.
    """
    out = sample
    if res.mirrored:
        out = out.replace(
            ortho=out.ortho[:, ::-1].copy(),
            dem=out.dem[:, ::-1].copy(),
            nodata_mask=out.nodata_mask[:, ::-1].copy(),
            outlier_mask=out.outlier_mask[:, ::-1].copy(),
        )
    angle = abs(res.alpha)
    if angle > 0:
        frame = out.ortho.shape
        new_frame = rotated_shape(frame, angle)
        out = out.replace(
            ortho=rotate_layer(out.ortho, angle, frame, new_frame, 0),
            dem=rotate_layer(out.dem, angle, frame, new_frame, sentinel),
            nodata_mask=rotate_layer(out.nodata_mask, angle, frame, new_frame, True),
            outlier_mask=rotate_layer(out.outlier_mask, angle, frame, new_frame, False),
        )
    out.provenance.update(
        alpha=res.alpha, mirrored=res.mirrored, y_left=res.y_left, x_bottom=res.x_bottom
    )
    return trim_black_border(out, trim.tau_second, trim.black_threshold)


def verticalize(sample: RasterSample, trim: TrimConfig = TrimConfig(), sentinel: float = NODATA) -> RasterSample:
    """First trim, tilt estimate, then :func:`apply_verticalization`.

    Frames whose tilt cannot be estimated are treated as already vertical.
    """
    trimmed = trim_black_border(sample, trim.tau_first, trim.black_threshold)
    try:
        res = estimate_rotation(trimmed.ortho, trim.black_threshold)
    except RotationEstimationError as exc:
        logger.info("%s: %s; assuming vertical", sample.id, exc)
        res = NO_ROTATION
    return apply_verticalization(trimmed, res, trim, sentinel)


class Verticalizer(TransformerMixin, BaseEstimator):
    """``fit`` estimates the rotation of a sample; ``transform`` applies it.

    The fitted estimate lives in ``result_``. ``fit_transform`` runs the full
    trim-estimate-rotate-trim sequence on one sample.
    """

    def __init__(self, tau_first=1.0, tau_second=0.1, black_threshold=0, sentinel=NODATA):
        self.tau_first = tau_first
        self.tau_second = tau_second
        self.black_threshold = black_threshold
        self.sentinel = sentinel

    def _trim_config(self):
        return TrimConfig(self.tau_first, self.tau_second, self.black_threshold)

    def fit(self, X: RasterSample, y=None):
        cfg = self._trim_config()
        trimmed = trim_black_border(X, cfg.tau_first, cfg.black_threshold)
        try:
            self.result_ = estimate_rotation(trimmed.ortho, cfg.black_threshold)
        except RotationEstimationError:
            self.result_ = NO_ROTATION
        return self

    def transform(self, X: RasterSample) -> RasterSample:
        if not hasattr(self, "result_"):
            raise AttributeError("Verticalizer is not fitted; call fit first")
        cfg = self._trim_config()
        trimmed = trim_black_border(X, cfg.tau_first, cfg.black_threshold)
        return apply_verticalization(trimmed, self.result_, cfg, self.sentinel)
