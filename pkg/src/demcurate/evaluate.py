"""Evaluation of DEM predictions against ground-truth patches.

Predictions in relative-depth space are standardised per patch, then mapped
back to metric space with the ground truth's mean and deviation. Errors are
RMSE, MAE and two range-normalised errors: the mean of
``(gt - pred) / (max(gt) - min(gt))`` and of its absolute value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_mask
from .rng import Xoshiro256, derive_seed


class DegenerateInputError(ValueError):
    """Zero deviation or zero range where a positive one is required."""


@dataclass(frozen=True)
class Standardization:
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DegenerateInputError(f"standard deviation must be > 0, got {self.sigma}")


@dataclass(frozen=True)
class MetricRecord:
    rmse: float
    mae: float
    rel_err: float
    rel_abs_err: float

    def as_dict(self) -> dict:
        return {"rmse": self.rmse, "mae": self.mae, "rel_err": self.rel_err, "rel_abs_err": self.rel_abs_err}


def _as_grid(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    return arr


@dataclass
class EvalPair:
    gt: np.ndarray
    pred: np.ndarray
    eval_mask: np.ndarray | None = None
    key: tuple = ()

    def __post_init__(self):
        # float64 throughout so closed-form checks are not limited by f32 rounding
        self.gt = _as_grid(self.gt, "gt")
        self.pred = _as_grid(self.pred, "pred")
        if self.gt.shape != self.pred.shape:
            raise ValueError(f"gt shape {self.gt.shape} differs from pred shape {self.pred.shape}")
        if self.eval_mask is not None:
            self.eval_mask = check_mask(self.eval_mask, self.gt.shape, "eval_mask")

    def keep(self) -> np.ndarray:
        if self.eval_mask is None:
            return np.ones(self.gt.shape, dtype=bool)
        return ~self.eval_mask


def standardize(grid: np.ndarray, exclude: np.ndarray | None = None) -> tuple[np.ndarray, Standardization]:
    """Standardise with mean and population deviation of the non-excluded pixels.

    Raises:
        DegenerateInputError: fewer than two usable pixels or zero deviation.
    """
    values = np.asarray(grid, dtype=np.float64)
    keep = ~check_mask(exclude, values.shape, "exclude")
    used = values[keep]
    if used.size < 2:
        raise DegenerateInputError("standardize needs at least two non-excluded pixels")
    sigma = float(used.std())
    if not sigma > 0:
        raise DegenerateInputError("cannot standardise a constant grid")
    stats = Standardization(float(used.mean()), sigma)
    return (values - stats.mu) / stats.sigma, stats


def rescale_to_metric(h_rel: np.ndarray, gt_stats: Standardization) -> np.ndarray:
    return gt_stats.sigma * np.asarray(h_rel, dtype=np.float64) + gt_stats.mu


def _errors(pair: EvalPair) -> tuple[np.ndarray, np.ndarray, float]:
    keep = pair.keep()
    gt = pair.gt.astype(np.float64)[keep]
    pred = pair.pred.astype(np.float64)[keep]
    if gt.size == 0:
        raise DegenerateInputError("no pixels left to evaluate")
    span = float(gt.max() - gt.min())
    if not span > 0:
        raise DegenerateInputError("ground truth has zero elevation range")
    return gt, pred, span


def metrics(pair: EvalPair) -> MetricRecord:
    gt, pred, span = _errors(pair)
    diff = gt - pred
    return MetricRecord(
        rmse=float(np.sqrt(np.mean(diff * diff))),
        mae=float(np.mean(np.abs(diff))),
        rel_err=float(np.mean(diff / span)),
        rel_abs_err=float(np.mean(np.abs(diff) / span)),
    )


def pooled_metrics(pairs) -> MetricRecord:
    """Pixel-pooled alternative: every evaluated pixel weighs the same."""
    sq = ab = rel = relab = 0.0
    n = 0
    for pair in pairs:
        gt, pred, span = _errors(pair)
        diff = gt - pred
        sq += float((diff * diff).sum())
        ab += float(np.abs(diff).sum())
        rel += float((diff / span).sum())
        relab += float((np.abs(diff) / span).sum())
        n += diff.size
    if n == 0:
        raise DegenerateInputError("no pairs to evaluate")
    return MetricRecord(float(np.sqrt(sq / n)), ab / n, rel / n, relab / n)


def mean_metrics(records) -> MetricRecord:
    records = list(records)
    if not records:
        raise DegenerateInputError("no records to average")
    return MetricRecord(*(float(np.mean([getattr(r, f) for r in records]))
                          for f in ("rmse", "mae", "rel_err", "rel_abs_err")))


def default_bin_edges() -> np.ndarray:
    return np.linspace(-3.0, 3.0, 14)


@dataclass
class ErrorExports:
    cdf: list[dict]
    bins: list[dict]


def error_exports(pairs, samples_per_patch: int = 100, seed: int = 0, bin_edges=None) -> ErrorExports:
    """Per-pixel error samples for CDF and per-elevation-bin plots.

    Draws ``samples_per_patch`` evaluated pixels per pair (seeded by the pair
    key, without replacement). ``cdf`` holds the sorted relative absolute
    errors with their empirical cumulative probability. ``bins`` holds one
    row per sampled pixel with its standardised ground-truth elevation, the
    bin it falls in (values beyond the outer edges go to the edge bins) and
    its relative error.
    """
    edges = default_bin_edges() if bin_edges is None else np.asarray(bin_edges, dtype=np.float64)
    rel_abs, rows = [], []
    for index, pair in enumerate(pairs):
        gt, pred, span = _errors(pair)
        sigma = gt.std()
        z = (gt - gt.mean()) / sigma if sigma > 0 else np.zeros_like(gt)
        key = pair.key if pair.key else (index,)
        picks = Xoshiro256(derive_seed(seed, *key)).choice(gt.size, min(samples_per_patch, gt.size))
        diff = (gt[picks] - pred[picks]) / span
        rel_abs.append(np.abs(diff))
        zs = z[picks]
        which = np.clip(np.searchsorted(edges, zs, side="right") - 1, 0, len(edges) - 2)
        for zv, b, d in zip(zs, which, diff):
            rows.append({"bin_left": float(edges[b]), "bin_right": float(edges[b + 1]),
                         "std_gt": float(zv), "rel_err": float(d)})
    values = np.sort(np.concatenate(rel_abs)) if rel_abs else np.empty(0)
    n = values.size
    cdf = [{"rel_abs_err": float(v), "cdf": (i + 1) / n} for i, v in enumerate(values)]
    return ErrorExports(cdf, rows)


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-grid standard scaling with an optional exclusion mask.

    ``fit`` learns ``mean_`` and ``scale_``; ``inverse_transform`` maps relative
    values back to metric space.
    """

    def fit(self, X, y=None, exclude=None):
        _, stats = standardize(X, exclude)
        self.mean_, self.scale_ = stats.mu, stats.sigma
        return self

    def transform(self, X):
        if not hasattr(self, "scale_"):
            raise AttributeError("Standardizer is not fitted; call fit first")
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_

    def inverse_transform(self, X):
        if not hasattr(self, "scale_"):
            raise AttributeError("Standardizer is not fitted; call fit first")
        return rescale_to_metric(X, Standardization(self.mean_, self.scale_))
