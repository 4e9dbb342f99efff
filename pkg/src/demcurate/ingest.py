"""Loading sample directories and the up-front sample selection rules."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .grid import GeoFootprint, GridKind, RasterSample, grid_kind, grid_read, grid_write

logger = logging.getLogger(__name__)

NODATA = -32767.0


class SampleLoadError(Exception):
    """A sample directory is missing files or holds inconsistent data."""


@dataclass(frozen=True)
class SampleSelectionConfig:
    max_aspect_ratio: float = 1.0
    nodata_sentinel: float = NODATA
    max_abs_elevation: float = 10000.0
    min_elevation: float = -5000.0

    def __post_init__(self):
        if self.max_aspect_ratio <= 0:
            raise ValueError("max_aspect_ratio must be > 0")
        if not self.min_elevation < self.max_abs_elevation:
            raise ValueError("min_elevation must be < max_abs_elevation")


@dataclass(frozen=True)
class Selection:
    accepted: bool
    reason: str | None = None

    def __bool__(self):
        return self.accepted


ACCEPT = Selection(True)


def load_sample(directory: str | Path) -> RasterSample:
    """Read ``ortho.mgrd``, ``dem.mgrd`` and ``meta.json`` from ``directory``.

    The DEM is kept at its native resolution; both masks start empty.
    """
    directory = Path(directory)
    paths = {name: directory / name for name in ("ortho.mgrd", "dem.mgrd", "meta.json")}
    for name, path in paths.items():
        if not path.is_file():
            raise SampleLoadError(f"{directory}: missing {name}")
    try:
        meta = json.loads(paths["meta.json"].read_text())
        sample_id = str(meta["id"])
        left = GeoFootprint.from_dict(meta["left"])
        right = GeoFootprint.from_dict(meta["right"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise SampleLoadError(f"{directory}: malformed meta.json ({exc})") from exc
    except ValueError as exc:
        raise SampleLoadError(f"{directory}: invalid footprint in meta.json ({exc})") from exc

    ortho = grid_read(paths["ortho.mgrd"])
    dem = grid_read(paths["dem.mgrd"])
    if grid_kind(ortho) is not GridKind.INTENSITY:
        raise SampleLoadError(f"{directory}: ortho.mgrd is not an intensity grid")
    if grid_kind(dem) is not GridKind.ELEVATION:
        raise SampleLoadError(f"{directory}: dem.mgrd is not an elevation grid")
    for key in ("width", "height"):
        if key in meta:
            actual = ortho.shape[1] if key == "width" else ortho.shape[0]
            if int(meta[key]) != actual:
                raise SampleLoadError(
                    f"{directory}: meta.json {key}={meta[key]} but ortho.mgrd has {actual}"
                )
    empty = np.zeros(dem.shape, dtype=bool)
    return RasterSample(sample_id, ortho, dem, empty, empty.copy(), left, right)


def save_sample(sample: RasterSample, directory: str | Path, extra_meta: dict | None = None) -> Path:
    """Write a sample directory in the layout :func:`load_sample` reads."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    grid_write(sample.ortho, directory / "ortho.mgrd")
    grid_write(sample.dem, directory / "dem.mgrd")
    meta = {
        "id": sample.id,
        "left": sample.left_footprint.to_dict(),
        "right": sample.right_footprint.to_dict(),
    }
    if extra_meta:
        meta.update(extra_meta)
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def select_sample(sample: RasterSample, cfg: SampleSelectionConfig = SampleSelectionConfig()) -> Selection:
    height, width = sample.ortho.shape
    if height == 0 or width / height > cfg.max_aspect_ratio:
        return Selection(False, "aspect")
    dem = sample.dem
    valid = dem != np.float32(cfg.nodata_sentinel)
    values = dem[valid]
    if values.size and (
        not np.all(np.isfinite(values))
        or values.min() < cfg.min_elevation
        or values.max() > cfg.max_abs_elevation
    ):
        return Selection(False, "elevation-range")
    return ACCEPT


def extract_nodata_mask(dem: np.ndarray, sentinel: float = NODATA) -> np.ndarray:
    """Mark pixels exactly equal to the nodata sentinel."""
    if grid_kind(dem) is not GridKind.ELEVATION:
        raise TypeError("extract_nodata_mask expects a float32 elevation grid")
    return dem == np.float32(sentinel)


class SampleSelector(BaseEstimator):
    """Estimator-style wrapper around :func:`select_sample`.

    ``predict`` maps a sequence of samples to ``"accept"`` or the rejection
    reason, so a batch can be screened in one call.
    """

    def __init__(self, max_aspect_ratio=1.0, nodata_sentinel=NODATA,
                 max_abs_elevation=10000.0, min_elevation=-5000.0):
        self.max_aspect_ratio = max_aspect_ratio
        self.nodata_sentinel = nodata_sentinel
        self.max_abs_elevation = max_abs_elevation
        self.min_elevation = min_elevation

    def fit(self, samples=None, y=None):
        self.config_ = SampleSelectionConfig(**self.get_params())
        return self

    def predict(self, samples):
        if not hasattr(self, "config_"):
            self.fit()
        out = []
        for sample in samples:
            sel = select_sample(sample, self.config_)
            out.append("accept" if sel.accepted else sel.reason)
        return np.array(out, dtype=object)
