"""Leakage-free train/validation assignment of spatially overlapping samples.

Each sample is represented by the union of its left and right stereo
footprints. Samples whose unions intersect, directly or through a chain of
other samples, form one cluster, and whole clusters are assigned to splits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .grid import GeoFootprint
from .rng import Xoshiro256

TRAIN_FRACTION = 65090 / (65090 + 15808)


@dataclass(frozen=True)
class SampleFootprint:
    sample_id: str
    union_bbox: GeoFootprint
    patch_count: int = 0

    @classmethod
    def from_pair(cls, sample_id: str, left: GeoFootprint, right: GeoFootprint, patch_count: int = 0):
        return cls(sample_id, bbox_union(left, right), patch_count)


@dataclass
class Cluster:
    cluster_id: int
    members: list[str]
    patch_count: int
    split: str = "unassigned"

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "members": list(self.members),
            "patch_count": self.patch_count,
            "split": self.split,
        }


@dataclass
class ClusterSet:
    clusters: list[Cluster] = field(default_factory=list)

    def split_of(self) -> dict[str, str]:
        return {m: c.split for c in self.clusters for m in c.members}

    def cluster_of(self) -> dict[str, int]:
        return {m: c.cluster_id for c in self.clusters for m in c.members}

    def patch_totals(self) -> dict[str, int]:
        totals = {"train": 0, "val": 0, "unassigned": 0}
        for c in self.clusters:
            totals[c.split] = totals.get(c.split, 0) + c.patch_count
        return totals

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps([c.to_dict() for c in self.clusters], indent=2) + "\n")

    @classmethod
    def from_json(cls, path: str | Path) -> ClusterSet:
        raw = json.loads(Path(path).read_text())
        return cls([
            Cluster(int(c["cluster_id"]), [str(m) for m in c["members"]],
                    int(c["patch_count"]), str(c["split"]))
            for c in raw
        ])


@dataclass(frozen=True)
class LeakageReport:
    violations: list[tuple[str, str]]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok


def bbox_union(a: GeoFootprint, b: GeoFootprint) -> GeoFootprint:
    return a.union(b)


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


def _bounds(footprints) -> np.ndarray:
    return np.array(
        [[f.union_bbox.lon_min, f.union_bbox.lon_max, f.union_bbox.lat_min, f.union_bbox.lat_max]
         for f in footprints],
        dtype=np.float64,
    ).reshape(-1, 4)


def intersecting_pairs(footprints) -> tuple[np.ndarray, np.ndarray]:
    """Index pairs ``i < j`` whose union boxes intersect (closed intervals)."""
    b = _bounds(footprints)
    ii, jj = [], []
    for i in range(len(b) - 1):
        rest = b[i + 1:]
        hit = (
            (b[i, 0] <= rest[:, 1]) & (rest[:, 0] <= b[i, 1])
            & (b[i, 2] <= rest[:, 3]) & (rest[:, 2] <= b[i, 3])
        )
        js = np.flatnonzero(hit) + i + 1
        ii.extend([i] * js.size)
        jj.extend(js.tolist())
    return np.array(ii, dtype=np.intp), np.array(jj, dtype=np.intp)


def cluster(footprints: list[SampleFootprint]) -> ClusterSet:
    """Connected components of the footprint-intersection graph.

    Clusters are numbered in order of their lexicographically smallest member,
    and members are listed sorted.
    """
    footprints = list(footprints)
    ids = [f.sample_id for f in footprints]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids in footprint list")
    uf = UnionFind(len(footprints))
    for i, j in zip(*intersecting_pairs(footprints)):
        uf.union(int(i), int(j))
    groups: dict[int, list[int]] = {}
    for idx in range(len(footprints)):
        groups.setdefault(uf.find(idx), []).append(idx)
    members = sorted((sorted(ids[i] for i in g), sum(footprints[i].patch_count for i in g))
                     for g in groups.values())
    return ClusterSet([Cluster(k, m, count) for k, (m, count) in enumerate(members)])


def assign_splits(clusters: ClusterSet, train_fraction: float = TRAIN_FRACTION, seed: int = 0) -> ClusterSet:
    """Greedy largest-first assignment of whole clusters.

    Clusters are visited by descending patch count; equal counts are ordered
    by a seeded permutation of cluster ids. Each cluster goes to the split
    that is furthest below its target patch count (train on ties).
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    items = sorted(clusters.clusters, key=lambda c: c.cluster_id)
    if not items:
        return ClusterSet([])
    rank = np.empty(len(items), dtype=np.int64)
    rank[Xoshiro256(seed).choice(len(items), len(items))] = np.arange(len(items))
    order = sorted(range(len(items)), key=lambda k: (-items[k].patch_count, rank[k]))
    total = sum(c.patch_count for c in items)
    target = {"train": train_fraction * total, "val": (1 - train_fraction) * total}
    got = {"train": 0, "val": 0}
    out = [None] * len(items)
    for k in order:
        c = items[k]
        train_gap = target["train"] - got["train"]
        val_gap = target["val"] - got["val"]
        split = "train" if train_gap >= val_gap else "val"
        got[split] += c.patch_count
        out[k] = Cluster(c.cluster_id, list(c.members), c.patch_count, split)
    return ClusterSet(out)


def verify_no_leakage(clusters: ClusterSet, footprints: list[SampleFootprint]) -> LeakageReport:
    """Every pair of intersecting samples must share a split."""
    split_of = clusters.split_of()
    footprints = list(footprints)
    violations = []
    for i, j in zip(*intersecting_pairs(footprints)):
        a, b = footprints[int(i)].sample_id, footprints[int(j)].sample_id
        if split_of.get(a) != split_of.get(b):
            violations.append(tuple(sorted((a, b))))
    return LeakageReport(sorted(violations))


class FootprintClusterer(BaseEstimator):
    """Cluster footprints and assign splits in sklearn style.

    After ``fit``, ``clusters_`` holds the assigned :class:`ClusterSet` and
    ``labels_`` the cluster id of each input footprint; ``predict`` maps
    footprints of fitted sample ids to their split.
    """

    def __init__(self, train_fraction=TRAIN_FRACTION, seed=0):
        self.train_fraction = train_fraction
        self.seed = seed

    def fit(self, X, y=None):
        X = list(X)
        self.clusters_ = assign_splits(cluster(X), self.train_fraction, self.seed)
        lookup = self.clusters_.cluster_of()
        self.labels_ = np.array([lookup[f.sample_id] for f in X])
        return self

    def predict(self, X):
        lookup = self.clusters_.split_of()
        return np.array([lookup[f.sample_id] for f in X], dtype=object)
