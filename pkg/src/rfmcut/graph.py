"""Score-class reduction of the customer graph and expansion of solutions.

The customer graph G (one vertex per customer, Manhattan distance between
score vectors as edge weight) is never materialised. Customers sharing a
score are merged into a class; the weight between two classes is the sum of
all member-pair distances, which collapses to
``count_i * count_j * manhattan(score_i, score_j)``.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .rfm import ScoredCustomer, ScoreVector


class GraphError(ValueError):
    pass


def manhattan(a: Sequence[int], b: Sequence[int]) -> int:
    if len(a) != len(b):
        raise GraphError(f"dimension mismatch: {len(a)} vs {len(b)}")
    return sum(abs(x - y) for x, y in zip(a, b))


@dataclass(frozen=True)
class ScoreClass:
    score: ScoreVector
    members: tuple[str, ...]

    @property
    def multiplicity(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Assignment:
    """Group label per vertex together with the cut value it achieves."""

    groups: tuple[int, ...]
    k: int
    objective: int

    def to_dict(self) -> dict:
        return {"k": self.k, "objective": self.objective, "groups": list(self.groups)}


@dataclass(frozen=True)
class CustomerSegmentation:
    groups: dict[str, int]
    k: int
    objective: int


@dataclass(frozen=True, eq=False)
class ReducedGraph:
    classes: tuple[ScoreClass, ...]
    t: int
    weights: np.ndarray = field(repr=False)

    @classmethod
    def from_counts(cls, scores: Sequence[Sequence[int]], counts: Sequence[int], t: int | None = None):
        """Build a graph from class scores and multiplicities alone.

        Members get synthetic ids ``"<class>:<n>"``; useful for tests and for
        graphs read back from JSON.
        """
        classes = tuple(
            ScoreClass(tuple(int(x) for x in s), tuple(f"{i}:{j}" for j in range(c)))
            for i, (s, c) in enumerate(zip(scores, counts))
        )
        return cls._build(classes, t)

    @classmethod
    def _build(cls, classes: tuple[ScoreClass, ...], t: int | None) -> "ReducedGraph":
        if not classes:
            raise GraphError("cannot build a graph without classes")
        q = len(classes[0].score)
        for c in classes:
            if len(c.score) != q:
                raise GraphError("all scores must have the same dimension")
            if c.multiplicity < 1:
                raise GraphError(f"class {c.score} has no members")
        if len({c.score for c in classes}) != len(classes):
            raise GraphError("duplicate class scores")
        if t is None:
            t = max(max(c.score) for c in classes)
        s = np.array([c.score for c in classes], dtype=np.int64)
        m = np.array([c.multiplicity for c in classes], dtype=np.int64)
        dist = np.abs(s[:, None, :] - s[None, :, :]).sum(axis=2)
        weights = np.outer(m, m) * dist
        weights.setflags(write=False)
        return cls(classes, t, weights)

    @property
    def n(self) -> int:
        """Number of customers represented."""
        return sum(c.multiplicity for c in self.classes)

    @property
    def q(self) -> int:
        return len(self.classes[0].score)

    def __len__(self) -> int:
        return len(self.classes)

    def weight(self, i: int, j: int) -> int:
        return int(self.weights[i, j])

    def edges(self) -> list[tuple[int, int, int]]:
        n = len(self)
        return [(i, j, int(self.weights[i, j])) for i in range(n) for j in range(i + 1, n) if self.weights[i, j] > 0]

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    @property
    def total_weight(self) -> int:
        return int(np.triu(self.weights, 1).sum())

    def class_of(self) -> dict[str, int]:
        return {cid: p for p, c in enumerate(self.classes) for cid in c.members}

    def to_dict(self, include_weights: bool = True) -> dict:
        data = {
            "t": self.t,
            "q": self.q,
            "classes": [{"score": list(c.score), "count": c.multiplicity} for c in self.classes],
        }
        if include_weights:
            data["weights"] = [list(e) for e in self.edges()]
        return data

    def to_json(self, include_weights: bool = True) -> str:
        return json.dumps(self.to_dict(include_weights), indent=2)

    @classmethod
    def from_dict(cls, data: Mapping) -> "ReducedGraph":
        """Rebuild from the JSON form; stored weights, if any, must match."""
        try:
            scores = [entry["score"] for entry in data["classes"]]
            counts = [int(entry["count"]) for entry in data["classes"]]
            t = int(data["t"])
        except (KeyError, TypeError) as exc:
            raise GraphError(f"malformed reduced graph: {exc}") from exc
        graph = cls.from_counts(scores, counts, t)
        if "q" in data and int(data["q"]) != graph.q:
            raise GraphError(f"q={data['q']} does not match score dimension {graph.q}")
        if "weights" in data:
            stored = {(int(i), int(j)): int(w) for i, j, w in data["weights"]}
            n = len(graph)
            for (i, j), w in stored.items():
                if not (0 <= i < n and 0 <= j < n) or graph.weight(i, j) != w:
                    raise GraphError(f"stored weight for edge ({i}, {j}) is inconsistent")
            if len(stored) != graph.edge_count:
                raise GraphError("stored weights do not cover every edge")
        return graph

    @classmethod
    def from_json(cls, text: str) -> "ReducedGraph":
        return cls.from_dict(json.loads(text))


def reduce(customers: Sequence[ScoredCustomer], t: int | None = None) -> ReducedGraph:
    """Merge customers with equal scores into classes.

    Classes are ordered lexicographically by score and list their members in
    customer id order.
    """
    if not customers:
        raise GraphError("no customers to reduce")
    by_score: dict[ScoreVector, list[str]] = defaultdict(list)
    for c in customers:
        by_score[tuple(c.score)].append(c.customer_id)
    classes = tuple(ScoreClass(s, tuple(sorted(by_score[s]))) for s in sorted(by_score))
    return ReducedGraph._build(classes, t)


def expand(reduced: ReducedGraph, solution: Assignment) -> CustomerSegmentation:
    """Give every customer the group of its class."""
    if len(solution.groups) != len(reduced):
        raise GraphError(
            f"solution covers {len(solution.groups)} classes, graph has {len(reduced)}"
        )
    groups = {}
    for cls_, g in zip(reduced.classes, solution.groups):
        for cid in cls_.members:
            groups[cid] = g
    return CustomerSegmentation(groups, solution.k, solution.objective)


def full_objective(
    customers: Sequence[ScoredCustomer],
    groups: CustomerSegmentation | Mapping[str, int],
    method: str = "classes",
) -> int:
    """Cut value of a customer-level grouping on the implicit customer graph.

    ``method="naive"`` sums every customer pair directly (quadratic);
    ``"classes"`` aggregates customers by (score, group) first.
    """
    if isinstance(groups, CustomerSegmentation):
        groups = groups.groups
    missing = [c.customer_id for c in customers if c.customer_id not in groups]
    if missing:
        raise GraphError(f"segmentation misses {len(missing)} customers, e.g. {missing[0]}")
    if method == "naive":
        total = 0
        for a in range(len(customers)):
            ca = customers[a]
            for b in range(a + 1, len(customers)):
                cb = customers[b]
                if groups[ca.customer_id] != groups[cb.customer_id]:
                    total += manhattan(ca.score, cb.score)
        return total
    if method != "classes":
        raise GraphError(f"unknown method {method!r}")

    cells = Counter((tuple(c.score), groups[c.customer_id]) for c in customers)
    keys = list(cells)
    s = np.array([k[0] for k in keys], dtype=np.int64)
    g = np.array([k[1] for k in keys])
    m = np.array([cells[k] for k in keys], dtype=np.int64)
    dist = np.abs(s[:, None, :] - s[None, :, :]).sum(axis=2)
    cut = g[:, None] != g[None, :]
    # every unordered pair is counted twice
    return int((np.outer(m, m) * dist * cut).sum()) // 2


def has_segmentation_property(customers: Sequence[ScoredCustomer], groups: Mapping[str, int]) -> bool:
    seen: dict[ScoreVector, int] = {}
    for c in customers:
        g = groups[c.customer_id]
        if seen.setdefault(tuple(c.score), g) != g:
            return False
    return True
