"""End-to-end processing of sample directories into a patch dataset.

Every sample is processed independently and leaves a completion marker in
``<out>/.state``; the dataset tables are rebuilt from those markers, so an
interrupted run resumes by skipping finished samples.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .grid import GeoFootprint, RasterSample, grid_read
from .ingest import SampleLoadError, extract_nodata_mask, load_sample, select_sample
from .patching import Patch, match_resolution, select_patch, tile, write_patch
from .repair import UnrecoverableSampleError, fill_missing, refine_elevation
from .split import (ClusterSet, SampleFootprint, assign_splits, cluster,
                    verify_no_leakage)
from .verticalize import DegenerateSampleError, verticalize

logger = logging.getLogger(__name__)

STATE_DIR = ".state"
UNASSIGNED = "unassigned"
SPLITS = ("train", "val", UNASSIGNED)
MANIFEST = "dataset-manifest.csv"
REJECTIONS = "rejections.csv"
SAMPLES = "samples.json"
CLUSTERS = "clusters.json"
MANIFEST_FIELDS = ("sample_id", "row0", "col0", "split", "cluster_id", "black_frac", "imputed_frac", "elev_std")
REJECTION_FIELDS = ("stage", "sample_id", "row0", "col0", "reason")


class LeakageError(Exception):
    def __init__(self, violations):
        super().__init__(f"{len(violations)} leaking sample pair(s)")
        self.violations = violations


def fmt(value: float) -> str:
    """Fixed float format so the tables are byte-stable across runs."""
    return f"{value:.6f}"


def atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path: Path, fields, rows) -> None:
    lines = [",".join(fields)]
    lines += [",".join(str(row[f]) for f in fields) for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class SampleOutcome:
    sample_id: str
    patches: list[dict] = field(default_factory=list)
    rejections: list[dict] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"sample_id": self.sample_id, "patches": self.patches,
                "rejections": self.rejections, "info": self.info}

    @classmethod
    def from_dict(cls, raw: dict) -> SampleOutcome:
        return cls(raw["sample_id"], raw["patches"], raw["rejections"], raw["info"])


def _rejection(stage: str, sample_id: str, reason: str, row0="", col0="") -> dict:
    return {"stage": stage, "sample_id": sample_id, "row0": row0, "col0": col0, "reason": reason}


def repair_sample(sample: RasterSample, cfg: PipelineConfig) -> RasterSample:
    """Nodata mask, preliminary fill, verticalisation and the outlier loop."""
    sentinel = cfg.selection.nodata_sentinel
    nodata = extract_nodata_mask(sample.dem, sentinel)
    sample = sample.replace(dem=fill_missing(sample.dem, nodata, cfg.fill), nodata_mask=nodata)
    sample = verticalize(sample, cfg.trim, sentinel)
    # rotation canvas brings back sentinel pixels, already marked in the nodata mask
    if sample.nodata_mask.any():
        sample = sample.replace(dem=fill_missing(sample.dem, sample.nodata_mask, cfg.fill))
    dem, outliers = refine_elevation(sample.dem, sample.nodata_mask, cfg.outliers, cfg.fill)
    return sample.replace(dem=dem, outlier_mask=outliers)


def patches_for(sample: RasterSample, cfg: PipelineConfig) -> list[Patch]:
    patches = tile(match_resolution(sample), cfg.patch)
    for patch in patches:
        select_patch(patch, cfg.patch)
    return patches


def process_sample(sample_dir: Path, out_dir: Path, cfg: PipelineConfig) -> SampleOutcome:
    """Run one sample through the pipeline and write its accepted patches.

    Expected data problems become rejection rows; anything else propagates.
    """
    sample = load_sample(sample_dir)
    outcome = SampleOutcome(sample.id)
    outcome.info = {
        "left": sample.left_footprint.to_dict(),
        "right": sample.right_footprint.to_dict(),
        "source_shape": list(sample.ortho.shape),
    }
    selection = select_sample(sample, cfg.selection)
    if not selection:
        outcome.rejections.append(_rejection("select", sample.id, selection.reason))
        return outcome
    try:
        sample = repair_sample(sample, cfg)
    except UnrecoverableSampleError:
        outcome.rejections.append(_rejection("repair", sample.id, "unrecoverable"))
        return outcome
    except DegenerateSampleError:
        reason = "degenerate" if sample.ortho.any() else "black"
        outcome.rejections.append(_rejection("verticalize", sample.id, reason))
        return outcome
    outcome.info.update(
        shape=list(sample.ortho.shape),
        alpha=float(sample.provenance.get("alpha", 0.0)),
        mirrored=bool(sample.provenance.get("mirrored", False)),
    )
    patches = patches_for(sample, cfg)
    if not patches:
        outcome.rejections.append(_rejection("tile", sample.id, "too-small"))
    for patch in patches:
        if patch.accepted:
            write_patch(patch, out_dir / UNASSIGNED / patch.name)
            outcome.patches.append({
                "sample_id": patch.sample_id, "row0": patch.row0, "col0": patch.col0,
                "split": UNASSIGNED, "cluster_id": "",
                "black_frac": fmt(patch.black_frac), "imputed_frac": fmt(patch.imputed_frac),
                "elev_std": fmt(patch.elev_std),
            })
        else:
            outcome.rejections.append(
                _rejection("patch", patch.sample_id, "+".join(sorted(patch.rejection)), patch.row0, patch.col0))
    return outcome


def _marker(out_dir: Path, sample_id: str) -> Path:
    return out_dir / STATE_DIR / f"{sample_id}.json"


def _run_one(args) -> str:
    sample_dir, out_dir, cfg = args
    sample_dir, out_dir = Path(sample_dir), Path(out_dir)
    outcome = process_sample(sample_dir, out_dir, cfg)
    atomic_write_text(_marker(out_dir, outcome.sample_id), json.dumps(outcome.to_dict(), sort_keys=True) + "\n")
    return outcome.sample_id


def sample_dirs(input_dir: Path) -> list[Path]:
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise SampleLoadError(f"input directory {input_dir} does not exist")
    return sorted(p for p in input_dir.iterdir() if (p / "meta.json").is_file())


def _sample_id(sample_dir: Path) -> str:
    try:
        return str(json.loads((sample_dir / "meta.json").read_text())["id"])
    except (OSError, ValueError, KeyError) as exc:
        raise SampleLoadError(f"{sample_dir}: malformed meta.json") from exc


def run_process(input_dir, out_dir, cfg: PipelineConfig, threads: int = 1) -> dict:
    """Process every sample directory under ``input_dir`` into ``out_dir``.

    Samples with an existing completion marker are skipped. Returns counts of
    processed, skipped and accepted-patch totals.
    """
    out_dir = Path(out_dir)
    (out_dir / UNASSIGNED).mkdir(parents=True, exist_ok=True)
    todo, skipped = [], 0
    for d in sample_dirs(input_dir):
        if _marker(out_dir, _sample_id(d)).is_file():
            skipped += 1
        else:
            todo.append((str(d), str(out_dir), cfg))
    if threads > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for sample_id in pool.map(_run_one, todo):
                logger.info("processed %s", sample_id)
    else:
        for job in todo:
            logger.info("processed %s", _run_one(job))
    totals = write_tables(out_dir)
    return {"processed": len(todo), "skipped": skipped, **totals}


def load_outcomes(out_dir: Path) -> list[SampleOutcome]:
    state = Path(out_dir) / STATE_DIR
    if not state.is_dir():
        return []
    outcomes = [SampleOutcome.from_dict(json.loads(p.read_text())) for p in state.glob("*.json")]
    return sorted(outcomes, key=lambda o: o.sample_id)


def _patch_key(row: dict):
    return (row["sample_id"], int(row["row0"]), int(row["col0"]))


def write_tables(out_dir: Path) -> dict:
    """Rebuild manifest, rejection report and sample summary from the markers."""
    out_dir = Path(out_dir)
    outcomes = load_outcomes(out_dir)
    patches = sorted((p for o in outcomes for p in o.patches), key=_patch_key)
    rejections = sorted(
        (r for o in outcomes for r in o.rejections),
        key=lambda r: (r["sample_id"], r["stage"], str(r["row0"]).zfill(10), str(r["col0"]).zfill(10)),
    )
    counts: dict[str, int] = {}
    for p in patches:
        counts[p["sample_id"]] = counts.get(p["sample_id"], 0) + 1
    samples = {o.sample_id: {**o.info, "patch_count": counts.get(o.sample_id, 0)} for o in outcomes}
    write_csv(out_dir / MANIFEST, MANIFEST_FIELDS, patches)
    write_csv(out_dir / REJECTIONS, REJECTION_FIELDS, rejections)
    atomic_write_text(out_dir / SAMPLES, json.dumps(samples, indent=2, sort_keys=True) + "\n")
    return {"samples": len(outcomes), "patches": len(patches), "rejections": len(rejections)}


def patch_dir(out_dir: Path, row: dict) -> Path:
    return Path(out_dir) / row["split"] / f"{row['sample_id']}_{row['row0']}_{row['col0']}"


def load_footprints(out_dir: Path) -> list[SampleFootprint]:
    samples = json.loads((Path(out_dir) / SAMPLES).read_text())
    return [
        SampleFootprint.from_pair(sid, GeoFootprint.from_dict(info["left"]),
                                  GeoFootprint.from_dict(info["right"]), int(info["patch_count"]))
        for sid, info in sorted(samples.items())
    ]


def run_split(out_dir, train_fraction: float, seed: int) -> ClusterSet:
    """Cluster samples, assign splits, move patch directories and update the manifest.

    Raises:
        LeakageError: if the assignment leaks (should not happen by construction).
    """
    out_dir = Path(out_dir)
    footprints = load_footprints(out_dir)
    clusters = assign_splits(cluster(footprints), train_fraction, seed)
    report = verify_no_leakage(clusters, footprints)
    if not report.ok:
        raise LeakageError(report.violations)
    split_of, cluster_of = clusters.split_of(), clusters.cluster_of()
    rows = read_csv(out_dir / MANIFEST)
    for row in rows:
        src = patch_dir(out_dir, row)
        row["split"] = split_of[row["sample_id"]]
        row["cluster_id"] = cluster_of[row["sample_id"]]
        dst = patch_dir(out_dir, row)
        if src != dst:
            dst.parent.mkdir(parents=True, exist_ok=True)
            if dst.exists():
                shutil.rmtree(dst)
            shutil.move(str(src), str(dst))
    clusters.to_json(out_dir / CLUSTERS)
    write_csv(out_dir / MANIFEST, MANIFEST_FIELDS, rows)
    # keep the resume markers in sync so a later process run does not undo the split
    for outcome in load_outcomes(out_dir):
        for p in outcome.patches:
            p["split"], p["cluster_id"] = split_of[p["sample_id"]], cluster_of[p["sample_id"]]
        atomic_write_text(_marker(out_dir, outcome.sample_id),
                          json.dumps(outcome.to_dict(), sort_keys=True) + "\n")
    return clusters


def verify_split(out_dir) -> list[tuple[str, str]]:
    """Re-check an existing (possibly hand-edited) clusters.json."""
    out_dir = Path(out_dir)
    clusters = ClusterSet.from_json(out_dir / CLUSTERS)
    return verify_no_leakage(clusters, load_footprints(out_dir)).violations


def read_manifest_patch(out_dir: Path, row: dict) -> Patch:
    from .patching import read_patch
    return read_patch(patch_dir(out_dir, row), row["sample_id"], int(row["row0"]), int(row["col0"]))


def read_prediction(pred_dir: Path, row: dict) -> np.ndarray | None:
    path = patch_dir(pred_dir, row) / "pred.mgrd"
    return grid_read(path) if path.is_file() else None


PATCH_STATS_FIELDS = MANIFEST_FIELDS + ("mean", "stddev", "masked_fraction", "mean_slope", "lat", "lon")
MASKED_BINS = (0.0, 1.0, 20)
SLOPE_BINS = (0.0, 90.0, 90)


def _stats_job(args):
    from .stats import elevation_histograms, patch_centroid, patch_stats
    out_dir, row, info, cfg = args
    patch = read_manifest_patch(Path(out_dir), row)
    centroid = None
    if info is not None and "shape" in info:
        union = GeoFootprint.from_dict(info["left"]).union(GeoFootprint.from_dict(info["right"]))
        centroid = patch_centroid(patch.row0, patch.col0, patch.dem.shape[0], tuple(info["shape"]), union)
    ps = patch_stats(patch, cfg, centroid)
    hist = elevation_histograms([patch], cfg, [row["split"]])
    return ps, hist


def run_stats(out_dir, cfg: PipelineConfig, threads: int = 1) -> dict:
    """Write ``stats/*.csv`` and ``stats/summary.json`` for the manifest's patches."""
    from .stats import ElevationHistograms, Histogram, histogram_rows

    out_dir = Path(out_dir)
    rows = sorted(read_csv(out_dir / MANIFEST), key=_patch_key)
    samples = json.loads((out_dir / SAMPLES).read_text())
    jobs = [(str(out_dir), row, samples.get(row["sample_id"]), cfg.stats) for row in rows]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_stats_job, jobs, chunksize=8))
    else:
        results = [_stats_job(j) for j in jobs]

    merged = ElevationHistograms()
    masked: dict[str, Histogram] = {}
    slope: dict[str, Histogram] = {}
    table = []
    for row, (ps, hist) in zip(rows, results):
        split = row["split"]
        for name in hist.metric:
            if name not in merged.metric:
                merged.metric[name] = hist.metric[name]
                merged.standardized[name] = hist.standardized[name]
                merged.skipped[name] = hist.skipped[name]
                merged.sampled[name] = hist.sampled[name]
            else:
                merged.metric[name].merge(hist.metric[name])
                merged.standardized[name].merge(hist.standardized[name])
                merged.skipped[name] += hist.skipped[name]
                merged.sampled[name] += hist.sampled[name]
        masked.setdefault(split, Histogram.empty(*MASKED_BINS)).add(np.array([ps.masked_fraction]))
        slope.setdefault(split, Histogram.empty(*SLOPE_BINS)).add(np.array([ps.mean_slope]))
        table.append({**{f: row[f] for f in MANIFEST_FIELDS},
                      "mean": fmt(ps.mean), "stddev": fmt(ps.stddev),
                      "masked_fraction": fmt(ps.masked_fraction), "mean_slope": fmt(ps.mean_slope),
                      "lat": fmt(ps.lat), "lon": fmt(ps.lon)})

    stats_dir = out_dir / "stats"
    hist_fields = ("bin_left", "bin_right", "count", "split")

    def hist_csv(name, hists):
        formatted = [{**r, "bin_left": fmt(r["bin_left"]), "bin_right": fmt(r["bin_right"])}
                     for r in histogram_rows(hists)]
        write_csv(stats_dir / name, hist_fields, formatted)

    hist_csv("elevation_metric.csv", merged.metric)
    hist_csv("elevation_standardized.csv", merged.standardized)
    hist_csv("masked_fraction.csv", masked)
    hist_csv("mean_slope.csv", slope)
    write_csv(stats_dir / "patches.csv", PATCH_STATS_FIELDS, table)

    summary = {"patches": len(rows), "splits": {}}
    for split in sorted({r["split"] for r in rows}):
        mine = [t for t in table if t["split"] == split]
        summary["splits"][split] = {
            "patches": len(mine),
            "samples": len({t["sample_id"] for t in mine}),
            "sampled_values": merged.sampled[split],
            "standardized_skipped_patches": merged.skipped[split],
            "mean_elevation": round(float(np.mean([float(t["mean"]) for t in mine])), 6),
            "mean_masked_fraction": round(float(np.mean([float(t["masked_fraction"]) for t in mine])), 6),
            "mean_slope": round(float(np.mean([float(t["mean_slope"]) for t in mine])), 6),
        }
    atomic_write_text(stats_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


METRIC_FIELDS = ("split", "sample_id", "row0", "col0", "rmse", "mae", "rel_err", "rel_abs_err")


def run_eval(dataset_dir, pred_dir, out_dir, cfg: PipelineConfig, *, relative: bool = False,
             exclude_masked: bool = False, pooled: bool = False) -> dict:
    """Score ``pred.mgrd`` files laid out like the dataset's patch directories.

    Returns the aggregate metrics plus the number of patches scored and missing.
    """
    from .evaluate import (DegenerateInputError, EvalPair, error_exports, mean_metrics, metrics,
                           pooled_metrics, rescale_to_metric, standardize)

    dataset_dir, pred_dir, out_dir = Path(dataset_dir), Path(pred_dir), Path(out_dir)
    rows = sorted(read_csv(dataset_dir / MANIFEST), key=_patch_key)
    pairs, records, table, missing, degenerate = [], [], [], 0, 0
    for row in rows:
        pred = read_prediction(pred_dir, row)
        if pred is None:
            missing += 1
            continue
        patch = read_manifest_patch(dataset_dir, row)
        exclude = (patch.invalid_mask | patch.outlier_mask) if exclude_masked else None
        pred = pred.astype(np.float64)
        try:
            if relative:
                _, gt_stats = standardize(patch.dem, exclude)
                pred = rescale_to_metric(pred, gt_stats)
            pair = EvalPair(patch.dem, pred, exclude, patch.key)
            rec = metrics(pair)
        except DegenerateInputError as exc:
            logger.warning("%s: %s", patch.name, exc)
            degenerate += 1
            continue
        pairs.append(pair)
        records.append(rec)
        table.append({"split": row["split"], "sample_id": row["sample_id"], "row0": row["row0"],
                      "col0": row["col0"], **{k: fmt(v) for k, v in rec.as_dict().items()}})
    if not records:
        raise FileNotFoundError(f"no predictions found under {pred_dir}")
    agg = pooled_metrics(pairs) if pooled else mean_metrics(records)
    table.append({"split": "all", "sample_id": "pooled" if pooled else "mean", "row0": "", "col0": "",
                  **{k: fmt(v) for k, v in agg.as_dict().items()}})
    exports = error_exports(pairs, cfg.eval.samples_per_patch, cfg.seed, cfg.eval.bin_edges)
    write_csv(out_dir / "metrics.csv", METRIC_FIELDS, table)
    write_csv(out_dir / "cdf.csv", ("rel_abs_err", "cdf"),
              [{"rel_abs_err": f"{r['rel_abs_err']:.9f}", "cdf": f"{r['cdf']:.9f}"} for r in exports.cdf])
    write_csv(out_dir / "bins.csv", ("bin_left", "bin_right", "std_gt", "rel_err"),
              [{k: f"{v:.9f}" for k, v in r.items()} for r in exports.bins])
    return {"scored": len(records), "missing": missing, "degenerate": degenerate, **agg.as_dict()}
