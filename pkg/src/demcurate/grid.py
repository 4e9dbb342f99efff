"""Raster containers, the MGRD grid file format and resampling helpers.

Grids are plain 2-D numpy arrays. The scalar kind is carried by the array
dtype: ``uint8`` for intensity, ``float32`` for elevation and ``bool`` for
masks.

MGRD layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"MGRD"
    4       2     version (1)
    6       1     dtype code (0=u8, 1=f32, 2=bool stored as u8 0/1)
    7       4     width
    11      4     height
    15      ...   row-major payload
"""

from __future__ import annotations

import enum
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

MAGIC = b"MGRD"
VERSION = 1
_HEADER = struct.Struct("<4sHBII")
HEADER_SIZE = _HEADER.size


class GridFormatError(ValueError):
    """Raised when an MGRD file is malformed."""


class GridKind(enum.IntEnum):
    INTENSITY = 0
    ELEVATION = 1
    MASK = 2


_KIND_DTYPE = {
    GridKind.INTENSITY: np.dtype(np.uint8),
    GridKind.ELEVATION: np.dtype("<f4"),
    GridKind.MASK: np.dtype(np.uint8),
}


def grid_kind(grid: np.ndarray) -> GridKind:
    """Return the kind of a grid, raising ``TypeError`` for unsupported arrays."""
    if not isinstance(grid, np.ndarray) or grid.ndim != 2:
        raise TypeError("grid must be a 2-D numpy array")
    if grid.dtype == np.bool_:
        return GridKind.MASK
    if grid.dtype == np.uint8:
        return GridKind.INTENSITY
    if grid.dtype == np.float32:
        return GridKind.ELEVATION
    raise TypeError(f"unsupported grid dtype {grid.dtype}; expected uint8, float32 or bool")


def grid_write(grid: np.ndarray, path: str | os.PathLike) -> None:
    kind = grid_kind(grid)
    height, width = grid.shape
    payload = np.ascontiguousarray(grid, dtype=_KIND_DTYPE[kind])
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, int(kind), width, height))
            fh.write(payload.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write grid to {path}: {exc}") from exc


def grid_read(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER_SIZE:
        raise GridFormatError(f"{path}: truncated header ({len(raw)} bytes)")
    magic, version, code, width, height = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise GridFormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise GridFormatError(f"{path}: unsupported version {version}")
    try:
        kind = GridKind(code)
    except ValueError:
        raise GridFormatError(f"{path}: unknown dtype code {code}") from None
    dtype = _KIND_DTYPE[kind]
    expected = width * height * dtype.itemsize
    available = len(raw) - HEADER_SIZE
    if available < expected:
        raise GridFormatError(
            f"{path}: truncated payload ({available} of {expected} bytes)"
        )
    if available > expected:
        raise GridFormatError(f"{path}: {available - expected} trailing payload bytes")
    data = np.frombuffer(raw, dtype=dtype, offset=HEADER_SIZE).reshape(height, width)
    if kind is GridKind.MASK:
        if data.size and data.max() > 1:
            raise GridFormatError(f"{path}: mask payload holds values other than 0/1")
        return data.astype(bool)
    return data.astype(dtype.newbyteorder("="), copy=True)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # pixel-center convention (align_corners=False)
    return (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5


def _linear_axis(n_out: int, n_in: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    pos = np.clip(_source_coords(n_out, n_in), 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def _nearest_axis(n_out: int, n_in: int) -> np.ndarray:
    idx = np.floor((np.arange(n_out) + 0.5) * (n_in / n_out)).astype(np.intp)
    return np.clip(idx, 0, n_in - 1)


def _cast_like(values: np.ndarray, kind: GridKind) -> np.ndarray:
    if kind is GridKind.INTENSITY:
        return np.clip(np.rint(values), 0, 255).astype(np.uint8)
    return values.astype(np.float32)


def resample(grid: np.ndarray, new_width: int, new_height: int, method: str = "bilinear") -> np.ndarray:
    """Resample ``grid`` to ``new_height x new_width``.

    Bilinear sampling is edge-clamped and only allowed for intensity and
    elevation grids. Nearest picks the source pixel whose center is closest.
    """
    kind = grid_kind(grid)
    if new_width < 1 or new_height < 1:
        raise ValueError("resample dimensions must be >= 1")
    if method not in ("bilinear", "nearest"):
        raise ValueError(f"unknown resampling method {method!r}")
    if method == "bilinear" and kind is GridKind.MASK:
        raise ValueError("bilinear resampling is not defined for masks; use 'nearest'")
    height, width = grid.shape
    if (new_height, new_width) == (height, width):
        return grid.copy()
    if method == "nearest":
        rows = _nearest_axis(new_height, height)
        cols = _nearest_axis(new_width, width)
        return grid[rows[:, None], cols[None, :]]

    y0, y1, wy = _linear_axis(new_height, height)
    x0, x1, wx = _linear_axis(new_width, width)
    src = grid.astype(np.float64)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bottom = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy)[:, None] + bottom * wy[:, None]
    return _cast_like(out, kind)


# ---------------------------------------------------------------------------
# Rotation with canvas expansion
# ---------------------------------------------------------------------------


def rotated_shape(shape: tuple[int, int], angle: float) -> tuple[int, int]:
    """Canvas size holding ``shape`` rotated by ``angle`` radians."""
    height, width = shape
    c, s = abs(math.cos(angle)), abs(math.sin(angle))
    new_h = math.ceil(height * c + width * s - 1e-6)
    new_w = math.ceil(width * c + height * s - 1e-6)
    return max(new_h, 1), max(new_w, 1)


def rotate_layer(
    layer: np.ndarray,
    angle: float,
    frame_shape: tuple[int, int],
    out_frame_shape: tuple[int, int],
    fill: float | bool,
) -> np.ndarray:
    """Rotate one layer counter-clockwise by ``angle`` radians about its center.

    ``frame_shape``/``out_frame_shape`` are the reference (ortho) grid sizes
    before and after rotation. Layers at a different resolution are rotated in
    the reference frame's physical coordinates so every layer stays aligned.
    Continuous layers use edge-clamped bilinear sampling; masks use nearest.
    Pixels whose source falls outside the layer get ``fill``.
    """
    kind = grid_kind(layer)
    h, w = layer.shape
    fh, fw = frame_shape
    oh, ow = out_frame_shape
    sy, sx = h / fh, w / fw
    out_shape = (max(round(oh * sy), 1), max(round(ow * sx), 1))
    osy, osx = out_shape[0] / oh, out_shape[1] / ow

    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, s], [-s, c]])
    # output layer px -> output frame -> source frame -> source layer px
    a_out = np.diag([1 / osy, 1 / osx])
    b_out = np.array([0.5 / osy - 0.5, 0.5 / osx - 0.5])
    center_out = np.array([(oh - 1) / 2, (ow - 1) / 2])
    center_in = np.array([(fh - 1) / 2, (fw - 1) / 2])
    a_in = np.diag([sy, sx])
    b_in = np.array([0.5 * sy - 0.5, 0.5 * sx - 0.5])
    matrix = a_in @ rot @ a_out
    offset = a_in @ (rot @ (b_out - center_out) + center_in) + b_in

    inside = ndimage.affine_transform(
        np.ones(layer.shape, dtype=np.uint8), matrix, offset, output_shape=out_shape,
        order=0, mode="constant", cval=0,
    ).astype(bool)
    if kind is GridKind.MASK:
        values = ndimage.affine_transform(
            layer.astype(np.uint8), matrix, offset, output_shape=out_shape, order=0, mode="nearest"
        ).astype(bool)
        return np.where(inside, values, bool(fill))
    values = ndimage.affine_transform(
        layer.astype(np.float64), matrix, offset, output_shape=out_shape, order=1, mode="nearest"
    )
    return _cast_like(np.where(inside, values, fill), kind)


# ---------------------------------------------------------------------------
# Footprints and samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeoFootprint:
    """Plain lon/lat rectangle (no antimeridian wrapping)."""

    lon_min: float
    lon_max: float
    lat_min: float
    lat_max: float

    def __post_init__(self):
        if not (-180.0 <= self.lon_min <= self.lon_max <= 180.0):
            raise ValueError(f"invalid longitude range [{self.lon_min}, {self.lon_max}]")
        if not (-90.0 <= self.lat_min <= self.lat_max <= 90.0):
            raise ValueError(f"invalid latitude range [{self.lat_min}, {self.lat_max}]")

    def union(self, other: GeoFootprint) -> GeoFootprint:
        return GeoFootprint(
            min(self.lon_min, other.lon_min),
            max(self.lon_max, other.lon_max),
            min(self.lat_min, other.lat_min),
            max(self.lat_max, other.lat_max),
        )

    def intersects(self, other: GeoFootprint) -> bool:
        """Closed-interval test: touching edges count as intersecting."""
        return (
            self.lon_min <= other.lon_max
            and other.lon_min <= self.lon_max
            and self.lat_min <= other.lat_max
            and other.lat_min <= self.lat_max
        )

    def to_dict(self) -> dict:
        return {
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GeoFootprint:
        return cls(float(d["lon_min"]), float(d["lon_max"]), float(d["lat_min"]), float(d["lat_max"]))


@dataclass
class RasterSample:
    """One source sample: ortho, DEM, masks and footprints.

    ``provenance`` records processing facts such as the applied rotation.
    """

    id: str
    ortho: np.ndarray
    dem: np.ndarray
    nodata_mask: np.ndarray
    outlier_mask: np.ndarray
    left_footprint: GeoFootprint
    right_footprint: GeoFootprint
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if grid_kind(self.ortho) is not GridKind.INTENSITY:
            raise TypeError("ortho must be a uint8 grid")
        if grid_kind(self.dem) is not GridKind.ELEVATION:
            raise TypeError("dem must be a float32 grid")
        for name in ("nodata_mask", "outlier_mask"):
            mask = getattr(self, name)
            if grid_kind(mask) is not GridKind.MASK:
                raise TypeError(f"{name} must be a bool grid")
            if mask.shape != self.dem.shape:
                raise ValueError(f"{name} shape {mask.shape} differs from dem shape {self.dem.shape}")
        if np.any(self.nodata_mask & self.outlier_mask):
            raise ValueError("nodata_mask and outlier_mask overlap")

    @property
    def union_footprint(self) -> GeoFootprint:
        return self.left_footprint.union(self.right_footprint)

    def replace(self, **changes) -> RasterSample:
        fields = dict(
            id=self.id,
            ortho=self.ortho,
            dem=self.dem,
            nodata_mask=self.nodata_mask,
            outlier_mask=self.outlier_mask,
            left_footprint=self.left_footprint,
            right_footprint=self.right_footprint,
            provenance=dict(self.provenance),
        )
        fields.update(changes)
        return RasterSample(**fields)


def ensure_dir(path: str | os.PathLike) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
