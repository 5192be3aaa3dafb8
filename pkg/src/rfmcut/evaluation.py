"""Clustering quality (silhouette) and per-cluster RFM statistics."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping, Sequence

import numpy as np

from .graph import CustomerSegmentation
from .rfm import ScoredCustomer

SPACES = ("score", "raw")


class EvaluationError(ValueError):
    pass


@dataclass
class SilhouetteReport:
    overall: float
    per_cluster_mean: dict[int, float]
    n_effective: int
    samples: dict[str, float] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "overall": self.overall,
            "per_cluster_mean": {str(g): v for g, v in sorted(self.per_cluster_mean.items())},
            "n_effective": self.n_effective,
        }


def _groups(seg: CustomerSegmentation | Mapping[str, int]) -> Mapping[str, int]:
    return seg.groups if isinstance(seg, CustomerSegmentation) else seg


def feature_matrix(customers: Sequence[ScoredCustomer], space: str = "score") -> np.ndarray:
    """Coordinates used for silhouette distances.

    ``score`` uses the integer score vectors; ``raw`` uses recency, frequency
    and monetary standardised to zero mean and unit (population) variance.
    """
    if space == "score":
        return np.array([c.score for c in customers], dtype=np.int64)
    if space == "raw":
        x = np.array(
            [[c.metrics.recency_days, c.metrics.frequency, float(c.metrics.monetary)] for c in customers],
            dtype=float,
        )
        std = x.std(axis=0)
        std[std == 0] = 1.0
        return (x - x.mean(axis=0)) / std
    raise EvaluationError(f"unknown silhouette space {space!r}")


def _manhattan_matrix(a: np.ndarray, b: np.ndarray, chunk: int = 512) -> np.ndarray:
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.result_type(a, b))
    for i in range(0, a.shape[0], chunk):
        out[i : i + chunk] = np.abs(a[i : i + chunk, None, :] - b[None, :, :]).sum(axis=2)
    return out


def _sample_scores(intra: np.ndarray, inter: np.ndarray, own_size: np.ndarray) -> np.ndarray:
    # intra: summed distance to own cluster; inter: mean distance to the
    # nearest other cluster
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(own_size > 1, intra / np.maximum(own_size - 1, 1), 0.0)
        denom = np.maximum(a, inter)
        s = np.where(denom > 0, (inter - a) / denom, 0.0)
    return np.where(own_size > 1, s, 0.0)


def silhouette(
    customers: Sequence[ScoredCustomer],
    seg: CustomerSegmentation | Mapping[str, int],
    space: str = "score",
    method: str = "classes",
) -> SilhouetteReport:
    """Mean silhouette over customers with Manhattan distance.

    Members of singleton clusters score 0. The ``classes`` method groups
    customers with identical coordinates and cluster before computing
    distances; ``naive`` works customer by customer.
    """
    groups = _groups(seg)
    labels = np.array([groups[c.customer_id] for c in customers])
    clusters = sorted(set(labels.tolist()))
    if len(clusters) < 2:
        raise EvaluationError("silhouette undefined: fewer than 2 non-empty clusters")
    x = feature_matrix(customers, space)
    sizes = {g: int((labels == g).sum()) for g in clusters}

    if method == "naive":
        s = _naive_samples(x, labels, clusters, sizes)
    elif method == "classes":
        s = _aggregated_samples(x, labels, clusters, sizes)
    else:
        raise EvaluationError(f"unknown method {method!r}")

    per_cluster = {g: float(s[labels == g].mean()) for g in clusters}
    return SilhouetteReport(
        overall=float(s.mean()),
        per_cluster_mean=per_cluster,
        n_effective=len(customers),
        samples={c.customer_id: float(v) for c, v in zip(customers, s)},
    )


def _naive_samples(x, labels, clusters, sizes) -> np.ndarray:
    n = len(labels)
    s = np.zeros(n)
    for i in range(n):
        d = np.abs(x - x[i]).sum(axis=1)
        own = labels[i]
        if sizes[own] == 1:
            continue
        a = d[labels == own].sum() / (sizes[own] - 1)
        b = min(d[labels == g].mean() for g in clusters if g != own)
        top = max(a, b)
        s[i] = (b - a) / top if top > 0 else 0.0
    return s


def _aggregated_samples(x, labels, clusters, sizes) -> np.ndarray:
    keys = [(tuple(row), g) for row, g in zip(x.tolist(), labels.tolist())]
    cells = Counter(keys)
    cell_keys = list(cells)
    cell_index = {key: i for i, key in enumerate(cell_keys)}
    points = np.array([key[0] for key in cell_keys], dtype=x.dtype)
    counts = np.array([cells[key] for key in cell_keys], dtype=float)
    col = {g: j for j, g in enumerate(clusters)}
    member = np.zeros((len(cell_keys), len(clusters)))
    for i, key in enumerate(cell_keys):
        member[i, col[key[1]]] = counts[i]

    dist = _manhattan_matrix(points, points).astype(float)
    sums = dist @ member  # summed distance from each cell to each cluster
    size_vec = np.array([sizes[g] for g in clusters], dtype=float)
    own_col = np.array([col[key[1]] for key in cell_keys])
    rows = np.arange(len(cell_keys))
    intra = sums[rows, own_col]
    means = sums / size_vec
    means[rows, own_col] = np.inf
    inter = means.min(axis=1)
    cell_s = _sample_scores(intra, inter, size_vec[own_col])
    return np.array([cell_s[cell_index[key]] for key in keys])


@dataclass
class FieldStats:
    min: float | Decimal
    mean: float | Decimal
    max: float | Decimal

    def to_dict(self, places: int | None = None) -> dict:
        def fmt(v):
            v = float(v)
            return round(v, places) if places is not None else v

        return {"min": fmt(self.min), "mean": fmt(self.mean), "max": fmt(self.max)}


@dataclass
class ClusterSummary:
    cluster: int
    group: int
    count: int
    recency: FieldStats
    frequency: FieldStats
    monetary: FieldStats

    def to_dict(self, places: int | None = None) -> dict:
        return {
            "cluster": self.cluster,
            "group": self.group,
            "count": self.count,
            "recency": self.recency.to_dict(places),
            "frequency": self.frequency.to_dict(places),
            "monetary": self.monetary.to_dict(places),
        }


@dataclass
class ClusterStats:
    clusters: list[ClusterSummary]

    @property
    def n(self) -> int:
        return sum(c.count for c in self.clusters)

    def to_dict(self, places: int | None = None) -> dict:
        return {"clusters": [c.to_dict(places) for c in self.clusters]}


def _field(values: list) -> FieldStats:
    if isinstance(values[0], Decimal):
        mean = sum(values, Decimal(0)) / len(values)
    else:
        mean = sum(values) / len(values)
    return FieldStats(min(values), mean, max(values))


def cluster_stats(
    customers: Sequence[ScoredCustomer], seg: CustomerSegmentation | Mapping[str, int]
) -> ClusterStats:
    """Count and min/mean/max of raw recency, frequency and monetary per group.

    Non-empty groups are listed by descending size (ties by group label) and
    renumbered 1, 2, ... in that order.
    """
    groups = _groups(seg)
    members: dict[int, list[ScoredCustomer]] = {}
    for c in customers:
        try:
            members.setdefault(groups[c.customer_id], []).append(c)
        except KeyError:
            raise EvaluationError(f"customer {c.customer_id} has no group") from None
    order = sorted(members, key=lambda g: (-len(members[g]), g))
    out = []
    for rank, g in enumerate(order, start=1):
        ms = [c.metrics for c in members[g]]
        out.append(
            ClusterSummary(
                cluster=rank,
                group=g,
                count=len(ms),
                recency=_field([m.recency_days for m in ms]),
                frequency=_field([m.frequency for m in ms]),
                monetary=_field([m.monetary for m in ms]),
            )
        )
    return ClusterStats(out)


@dataclass
class KChoice:
    k: int
    objective: int | None
    optimal: bool | None
    silhouette: float | None

    def to_dict(self) -> dict:
        return {"k": self.k, "objective": self.objective, "optimal": self.optimal, "silhouette": self.silhouette}


def choose_k(rows: Sequence[KChoice]) -> list[KChoice]:
    """Rank sweep rows by silhouette, best first; ties go to the smaller k.

    Rows without a silhouette sort last. No k is picked automatically.
    """
    return sorted(rows, key=lambda r: (r.silhouette is None, -(r.silhouette or 0.0), r.k))


def format_sweep_table(rows: Sequence[KChoice]) -> str:
    lines = [f"{'k':>3}  {'objective':>14}  {'optimal':>7}  {'silhouette':>10}"]
    for r in rows:
        obj = f"{r.objective:,}" if r.objective is not None else "-"
        opt = "-" if r.optimal is None else ("yes" if r.optimal else "no")
        sil = f"{r.silhouette:.4f}" if r.silhouette is not None else "-"
        lines.append(f"{r.k:>3}  {obj:>14}  {opt:>7}  {sil:>10}")
    return "\n".join(lines)


def format_cluster_table(stats: ClusterStats) -> str:
    lines = [f"{'cluster':>7}  {'value':>5}  {'recency':>10}  {'frequency':>10}  {'monetary':>14}  {'customers':>9}"]
    for c in stats.clusters:
        for i, name in enumerate(("min", "mean", "max")):
            r, f, m = (float(getattr(s, name)) for s in (c.recency, c.frequency, c.monetary))
            label = str(c.cluster) if i == 0 else ""
            count = f"{c.count:,}" if i == 0 else ""
            lines.append(f"{label:>7}  {name:>5}  {r:>10,.2f}  {f:>10,.2f}  {m:>14,.2f}  {count:>9}")
    return "\n".join(lines)


def stats_json(stats: ClusterStats) -> str:
    return json.dumps(stats.to_dict(), indent=2)
