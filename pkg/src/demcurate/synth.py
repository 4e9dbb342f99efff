"""Synthetic samples with known defects.

Terrain is power-law (fBm-like) noise built in the Fourier domain from the
package PRNG; the ortho is a Lambertian hillshade of that terrain. Defects
follow the patterns seen in stereo DEMs: elliptical nodata blobs and small
islands of valid but offset elevation inside them. The whole frame can be
embedded in a rotated black canvas to imitate oblique orthorectification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grid import GeoFootprint, RasterSample, resample, rotate_layer, rotated_shape
from .ingest import NODATA
from .rng import Xoshiro256, derive_seed


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters.

    ``roughness`` sets both the relief amplitude (as a fraction of half the
    elevation span) and the spectral slope: small values give smooth,
    near-planar terrain. ``dem_factor`` > 1 stores the DEM at a coarser
    resolution than the ortho.
    """

    width: int = 600
    height: int = 800
    roughness: float = 0.1
    elevation_range: tuple[float, float] = (-2000.0, 4000.0)
    nodata_blob_count: int = 3
    island_count: int = 2
    island_magnitude: float = 800.0
    frame_angle: float = 0.0
    seed: int = 0
    dem_factor: int = 1
    blob_radius: tuple[float, float] = (30.0, 45.0)
    island_radius: tuple[float, float] = (1.5, 3.0)
    sun_azimuth: float = 315.0
    sun_elevation: float = 45.0
    pixel_spacing: float = 6.0
    footprint: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0 < self.roughness < 1:
            raise ValueError("roughness must lie in (0, 1)")
        if self.elevation_range[0] >= self.elevation_range[1]:
            raise ValueError("elevation_range must be increasing")
        if self.dem_factor < 1:
            raise ValueError("dem_factor must be >= 1")


@dataclass
class DefectTruth:
    nodata_truth: np.ndarray
    island_truth: np.ndarray
    island_offsets: list = field(default_factory=list)


def _spectral_noise(rng: Xoshiro256, height: int, width: int, beta: float) -> np.ndarray:
    white = rng.normal(height * width).reshape(height, width)
    spectrum = np.fft.rfft2(white)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    freq = np.sqrt(fy * fy + fx * fx)
    freq[0, 0] = 1.0
    spectrum *= freq ** (-beta / 2.0)
    spectrum[0, 0] = 0.0
    field_ = np.fft.irfft2(spectrum, s=(height, width))
    peak = np.abs(field_).max()
    return field_ / peak if peak > 0 else field_


def synth_terrain(cfg: SynthConfig) -> np.ndarray:
    """Heightmap inside ``cfg.elevation_range``, deterministic under ``cfg.seed``."""
    if cfg.width < 64 or cfg.height < 64:
        raise ValueError("synthetic terrain needs at least 64x64 pixels")
    rng = Xoshiro256(derive_seed(cfg.seed, "terrain"))
    # roughness 0 -> beta 5 (smooth rolling relief); roughness 1 -> beta 3
    beta = 5.0 - 2.0 * cfg.roughness
    # synthesise on a padded periodic canvas so opposite edges are unrelated
    pad_h, pad_w = cfg.height + cfg.height // 2, cfg.width + cfg.width // 2
    noise = _spectral_noise(rng, pad_h, pad_w, beta)[: cfg.height, : cfg.width]
    noise /= max(np.abs(noise).max(), 1e-12)
    lo, hi = cfg.elevation_range
    mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    dem = mid + cfg.roughness * half * noise
    return np.clip(dem, lo, hi).astype(np.float32)


def synth_ortho(dem: np.ndarray, sun_azimuth: float = 315.0, sun_elevation: float = 45.0,
                pixel_spacing: float = 6.0) -> np.ndarray:
    """Lambertian hillshade quantised to ``1..255``; 0 is reserved for frame padding."""
    h = dem.astype(np.float64)
    dzdy, dzdx = np.gradient(h, pixel_spacing)
    az = math.radians(sun_azimuth)
    el = math.radians(sun_elevation)
    # light direction in (east, north, up); image rows grow southwards
    lx, ly, lz = math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)
    nx, ny, nz = -dzdx, dzdy, np.ones_like(h)
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    shade = np.clip((nx * lx + ny * ly + nz * lz) / norm, 0.0, 1.0)
    return (1 + np.rint(shade * 254)).astype(np.uint8)


def _ellipse(height: int, width: int, cy: float, cx: float, ry: float, rx: float, angle: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    dy, dx = yy - cy, xx - cx
    c, s = math.cos(angle), math.sin(angle)
    u = (dx * c + dy * s) / rx
    v = (-dx * s + dy * c) / ry
    return u * u + v * v <= 1.0


def _footprints(cfg: SynthConfig, rng: Xoshiro256) -> tuple[GeoFootprint, GeoFootprint]:
    if cfg.footprint is not None:
        lon, lat = cfg.footprint
    else:
        lon = float(rng.uniform(-170.0, 170.0, 1)[0])
        lat = float(rng.uniform(-60.0, 60.0, 1)[0])
    span_lon = cfg.width * cfg.pixel_spacing / 59_000.0
    span_lat = cfg.height * cfg.pixel_spacing / 59_000.0
    shift = rng.uniform(-0.1, 0.1, 2) * np.array([span_lon, span_lat])
    left = GeoFootprint(lon, lon + span_lon, lat, lat + span_lat)
    right = GeoFootprint(
        lon + shift[0], lon + shift[0] + span_lon, lat + shift[1], lat + shift[1] + span_lat
    )
    return left, right


def synth_clean_sample(cfg: SynthConfig, sample_id: str | None = None) -> RasterSample:
    rng = Xoshiro256(derive_seed(cfg.seed, "footprint"))
    dem = synth_terrain(cfg)
    ortho = synth_ortho(dem, cfg.sun_azimuth, cfg.sun_elevation, cfg.pixel_spacing)
    empty = np.zeros(dem.shape, dtype=bool)
    left, right = _footprints(cfg, rng)
    return RasterSample(sample_id or f"synth_{cfg.seed}", ortho, dem, empty, empty.copy(), left, right)


def inject_defects(sample: RasterSample, cfg: SynthConfig) -> tuple[RasterSample, DefectTruth]:
    """Carve nodata blobs, plant offset islands inside them, optionally frame obliquely.

    Islands sit near blob centres and carry the underlying terrain shifted by
    ``+-island_magnitude``. Returned truth masks live on the DEM grid of the
    returned sample.
    """
    rng = Xoshiro256(derive_seed(cfg.seed, "defects"))
    dem = sample.dem.copy()
    height, width = dem.shape
    nodata_truth = np.zeros(dem.shape, dtype=bool)
    offsets = []
    blobs = []
    for _ in range(cfg.nodata_blob_count):
        r_lo, r_hi = cfg.blob_radius
        ry, rx = rng.uniform(r_lo, r_hi, 2)
        margin = max(ry, rx) + 2
        if height <= 2 * margin or width <= 2 * margin:
            continue
        cy = float(rng.uniform(margin, height - margin, 1)[0])
        cx = float(rng.uniform(margin, width - margin, 1)[0])
        angle = float(rng.uniform(0.0, math.pi, 1)[0])
        blob = _ellipse(height, width, cy, cx, ry, rx, angle)
        nodata_truth |= blob
        blobs.append((cy, cx, min(ry, rx)))
    islands = []
    for i in range(min(cfg.island_count, len(blobs))):
        cy, cx, r_min = blobs[i]
        ir = float(rng.uniform(*cfg.island_radius, 1)[0])
        jitter = rng.uniform(-0.3, 0.3, 2) * max(r_min - ir, 0.0)
        sign = 1.0 if rng.random(1)[0] < 0.5 else -1.0
        island = _ellipse(height, width, cy + jitter[0], cx + jitter[1], ir, ir, 0.0) & nodata_truth
        islands.append((island, sign * cfg.island_magnitude))
        offsets.append(sign * cfg.island_magnitude)

    if cfg.dem_factor > 1:
        # defects live on the coarse DEM grid; build them there from the clean terrain
        dh, dw = max(height // cfg.dem_factor, 1), max(width // cfg.dem_factor, 1)
        dem = resample(dem, dw, dh)
        nodata_truth = resample(nodata_truth, dw, dh, "nearest")
        islands = [(resample(m, dw, dh, "nearest") & nodata_truth, off) for m, off in islands]
    island_truth = np.zeros(dem.shape, dtype=bool)
    for island, offset in islands:
        island_truth |= island
        dem[island] = dem[island] + np.float32(offset)
    empty = np.zeros(dem.shape, dtype=bool)
    out = sample.replace(dem=dem, nodata_mask=empty, outlier_mask=empty.copy())
    if cfg.frame_angle:
        # carve after rotating, otherwise bilinear sampling smears the sentinel into terrain
        out, nodata_truth, island_truth = embed_in_frame(out, math.radians(cfg.frame_angle),
                                                         [nodata_truth, island_truth])
    out.dem[nodata_truth & ~island_truth] = np.float32(NODATA)
    return out, DefectTruth(nodata_truth, island_truth, offsets)


def embed_in_frame(sample: RasterSample, angle: float, extra_masks=()) -> tuple:
    """Rotate a sample counter-clockwise by ``angle`` radians inside a black canvas."""
    frame = sample.ortho.shape
    new_frame = rotated_shape(frame, angle)
    out = sample.replace(
        ortho=rotate_layer(sample.ortho, angle, frame, new_frame, 0),
        dem=rotate_layer(sample.dem, angle, frame, new_frame, NODATA),
        nodata_mask=np.zeros(_layer_shape(sample.dem.shape, frame, new_frame), dtype=bool),
        outlier_mask=np.zeros(_layer_shape(sample.dem.shape, frame, new_frame), dtype=bool),
    )
    masks = [rotate_layer(m, angle, frame, new_frame, False) for m in extra_masks]
    return (out, *masks)


def _layer_shape(shape, frame, new_frame):
    sy, sx = shape[0] / frame[0], shape[1] / frame[1]
    return max(round(new_frame[0] * sy), 1), max(round(new_frame[1] * sx), 1)


def synth_sample(cfg: SynthConfig, sample_id: str | None = None) -> tuple[RasterSample, DefectTruth]:
    """Clean sample plus defects in one call."""
    return inject_defects(synth_clean_sample(cfg, sample_id), cfg)
