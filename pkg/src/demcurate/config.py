"""Single-file pipeline configuration.

The YAML document mirrors :data:`DEFAULT_CONFIG_YAML`; every key is optional
and unknown keys are rejected so typos fail loudly instead of silently
falling back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .evaluate import default_bin_edges
from .ingest import SampleSelectionConfig
from .patching import PatchConfig
from .repair import FillConfig, OutlierConfig
from .split import TRAIN_FRACTION
from .stats import StatsConfig
from .synth import SynthConfig
from .verticalize import TrimConfig


class ConfigError(ValueError):
    """Malformed configuration document."""


DEFAULT_CONFIG_YAML = f"""\
# Pipeline configuration; every key is optional.
seed: 0
selection:
  max_aspect_ratio: 1.0
  nodata_sentinel: -32767.0
  max_abs_elevation: 10000.0
  min_elevation: -5000.0
trim:
  tau_first: 1.0
  tau_second: 0.1
  black_threshold: 0
fill:
  kernel: 31
outliers:
  thresholds: [1.2, 1.1, 0.9]
  windows: [10, 45, 90]
  overlaps: [5, 20, 30]
  spreads: [0.2, 0.21, 0.27]
  two_sided: true
patch:
  patch_size: 518
  max_black_fraction: 0.10
  max_imputed_fraction: 0.15
  min_elev_std: 10.0
split:
  train_fraction: {TRAIN_FRACTION!r}
stats:
  pixels_per_patch: 10000
  histogram_bins: 256
  elevation_clip: [-5000.0, 5000.0]
  standardized_clip: [-4.0, 4.0]
  pixel_spacing: 6.0
eval:
  samples_per_patch: 100
  bin_edges: [{", ".join(repr(float(x)) for x in default_bin_edges())}]
synth:
  width: 600
  height: 800
  roughness: 0.1
  elevation_range: [-2000.0, 4000.0]
  nodata_blob_count: 3
  island_count: 2
  island_magnitude: 800.0
  frame_angle: 0.0
  dem_factor: 1
"""


@dataclass(frozen=True)
class SplitConfig:
    train_fraction: float = TRAIN_FRACTION


@dataclass(frozen=True)
class EvalConfig:
    samples_per_patch: int = 100
    bin_edges: tuple[float, ...] = tuple(float(x) for x in default_bin_edges())

    def __post_init__(self):
        if self.samples_per_patch < 1:
            raise ValueError("samples_per_patch must be >= 1")
        edges = list(self.bin_edges)
        if len(edges) < 2 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin_edges must be strictly increasing with at least two entries")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    selection: SampleSelectionConfig = field(default_factory=SampleSelectionConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    fill: FillConfig = field(default_factory=FillConfig)
    outliers: OutlierConfig = field(default_factory=OutlierConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def with_seed(self, seed: int | None) -> PipelineConfig:
        if seed is None:
            return self
        from dataclasses import replace
        return replace(self, seed=int(seed), stats=replace(self.stats, rng_seed=int(seed)),
                       synth=replace(self.synth, seed=int(seed)))


_OUTLIER_KEYS = {"thresholds", "windows", "overlaps", "spreads", "two_sided"}
_TUPLE_KEYS = {"elevation_clip", "standardized_clip", "elevation_range", "bin_edges"}
_SECTIONS = {
    "selection": SampleSelectionConfig,
    "trim": TrimConfig,
    "fill": FillConfig,
    "patch": PatchConfig,
    "split": SplitConfig,
    "stats": StatsConfig,
    "eval": EvalConfig,
    "synth": SynthConfig,
}


def _section(name: str, cls, raw) -> object:
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    allowed = set(cls.__dataclass_fields__)
    if name == "synth":
        allowed -= {"seed"}
    if name == "stats":
        allowed -= {"rng_seed"}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    values = {k: tuple(v) if k in _TUPLE_KEYS and isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid '{name}' section: {exc}") from exc


def config_from_dict(doc: dict | None) -> PipelineConfig:
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a mapping at top level")
    unknown = sorted(set(doc) - set(_SECTIONS) - {"seed", "outliers"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    parts = {name: _section(name, cls, doc.get(name)) for name, cls in _SECTIONS.items()}

    raw = doc.get("outliers") or {}
    if not isinstance(raw, dict):
        raise ConfigError("section 'outliers' must be a mapping")
    unknown = sorted(set(raw) - _OUTLIER_KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s) in 'outliers': {', '.join(unknown)}")
    base = OutlierConfig()
    try:
        outliers = OutlierConfig.from_lists(
            raw.get("thresholds", [p.threshold for p in base.passes]),
            raw.get("windows", [p.window for p in base.passes]),
            raw.get("overlaps", [p.overlap for p in base.passes]),
            raw.get("spreads", [p.spread for p in base.passes]),
            raw.get("two_sided", base.two_sided),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid 'outliers' section: {exc}") from exc

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    return PipelineConfig(seed=seed, outliers=outliers, **parts).with_seed(seed)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        doc = yaml.safe_load(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return config_from_dict(doc)
