"""Max-k-cut on a reduced graph: exact branch-and-bound and multi-start local search."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .graph import Assignment, ReducedGraph

MODES = ("exact", "heuristic", "auto")


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolveConfig:
    k: int = 2
    mode: str = "auto"
    seed: int = 0
    restarts: int = 50
    time_limit_seconds: float = 600.0
    exact_vertex_limit: int = 16
    workers: int = 1

    def __post_init__(self):
        if self.k < 2:
            raise SolverError(f"k must be at least 2, got {self.k}")
        if self.mode not in MODES:
            raise SolverError(f"unknown mode {self.mode!r}")
        if self.restarts < 1:
            raise SolverError("restarts must be positive")
        if self.time_limit_seconds <= 0:
            raise SolverError("time limit must be positive")
        if self.workers < 1:
            raise SolverError("workers must be positive")


@dataclass
class SolveResult:
    assignment: Assignment
    optimal: bool
    method: str
    iterations: int = 0
    restarts: int = 0
    wall_seconds: float = 0.0

    @property
    def k(self) -> int:
        return self.assignment.k

    @property
    def objective(self) -> int:
        return self.assignment.objective

    def to_dict(self, include_timing: bool = True) -> dict:
        data = {
            "k": self.k,
            "objective": self.objective,
            "optimal": self.optimal,
            "groups": list(self.assignment.groups),
        }
        if include_timing:
            data["wall_seconds"] = round(self.wall_seconds, 3)
        return data


@dataclass
class SweepEntry:
    k: int
    result: SolveResult | None = None
    error: str | None = None


def _weights(graph: ReducedGraph | np.ndarray) -> np.ndarray:
    """Weight matrix of a reduced graph, or a validated plain matrix."""
    if isinstance(graph, ReducedGraph):
        return graph.weights
    w = np.asarray(graph, dtype=np.int64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise SolverError("weight matrix must be square")
    if (w != w.T).any() or (w < 0).any() or np.diag(w).any():
        raise SolverError("weight matrix must be symmetric, non-negative, with a zero diagonal")
    return w


def evaluate(graph: ReducedGraph | np.ndarray, groups: Sequence[int], k: int) -> int:
    """Total weight of edges whose endpoints lie in different groups."""
    w = _weights(graph)
    g = np.asarray(groups)
    if g.shape != (w.shape[0],):
        raise SolverError(f"expected {w.shape[0]} group labels, got {g.shape[0] if g.ndim else 0}")
    if g.size and (g.min() < 0 or g.max() >= k):
        raise SolverError(f"group labels must lie in 0..{k - 1}")
    cut = g[:, None] != g[None, :]
    return int(np.triu(w * cut, 1).sum())


def canonical(groups: Sequence[int]) -> tuple[int, ...]:
    """Relabel groups in order of first use (0, 1, 2, ...)."""
    mapping: dict[int, int] = {}
    return tuple(mapping.setdefault(g, len(mapping)) for g in groups)


def _trivial(w: np.ndarray, config: SolveConfig, method: str, start: float) -> SolveResult | None:
    n = w.shape[0]
    if n <= config.k:
        groups = tuple(range(n))
        return SolveResult(
            Assignment(groups, config.k, int(np.triu(w, 1).sum())),
            optimal=True,
            method=method,
            wall_seconds=time.perf_counter() - start,
        )
    return None


def group_loads(w: np.ndarray, groups: np.ndarray, k: int) -> np.ndarray:
    """``loads[v, l]``: total weight from v to the vertices currently in group l."""
    loads = np.zeros((w.shape[0], k), dtype=np.int64)
    for g in range(k):
        loads[:, g] = w[:, groups == g].sum(axis=1)
    return loads


def relocate(w: np.ndarray, loads: np.ndarray, groups: np.ndarray, v: int, target: int) -> None:
    """Move v to ``target``, updating ``loads`` in place in O(n)."""
    loads[:, groups[v]] -= w[:, v]
    loads[:, target] += w[:, v]
    groups[v] = target


def _local_search(w: np.ndarray, k: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    n = w.shape[0]
    groups = rng.integers(0, k, size=n)
    loads = group_loads(w, groups, k)
    rows = np.arange(n)
    moves = 0
    while True:
        gain = loads[rows, groups][:, None] - loads
        flat = int(np.argmax(gain))
        v, target = divmod(flat, k)
        if gain[v, target] <= 0:
            break
        relocate(w, loads, groups, v, target)
        moves += 1
    return groups, moves


def solve_heuristic(graph: ReducedGraph | np.ndarray, config: SolveConfig) -> SolveResult:
    """Multi-start best-improvement local search over single-vertex relocations.

    Restart ``r`` draws its start from ``default_rng(seed + r)``; the kept
    solution is the one with the highest cut, ties going to the
    lexicographically smallest canonical labelling, so the result does not
    depend on ``workers``.
    """
    start = time.perf_counter()
    w = _weights(graph)
    trivial = _trivial(w, config, "heuristic", start)
    if trivial is not None:
        return trivial
    k = config.k
    total = int(np.triu(w, 1).sum())
    deadline = start + config.time_limit_seconds

    def run(r: int):
        if time.perf_counter() > deadline:
            return None
        groups, moves = _local_search(w, k, np.random.default_rng(config.seed + r))
        uncut = int(w[groups[:, None] == groups[None, :]].sum()) // 2
        return total - uncut, canonical(groups.tolist()), moves

    if config.workers == 1:
        outcomes = []
        for r in range(config.restarts):
            out = run(r)
            if out is None:
                break
            outcomes.append(out)
    else:
        with ThreadPoolExecutor(config.workers) as pool:
            outcomes = [o for o in pool.map(run, range(config.restarts)) if o is not None]

    best_obj, best_groups, _ = min(outcomes, key=lambda o: (-o[0], o[1]))
    return SolveResult(
        Assignment(best_groups, k, best_obj),
        optimal=False,
        method="heuristic",
        iterations=sum(o[2] for o in outcomes),
        restarts=len(outcomes),
        wall_seconds=time.perf_counter() - start,
    )


def _balanced_pairs(r: int, k: int) -> int:
    """Fewest same-group pairs any split of r items into k groups can have."""
    q, extra = divmod(r, k)
    return extra * (q + 1) * q // 2 + (k - extra) * q * (q - 1) // 2


def _suffix_bounds(w: list[list[int]], k: int) -> list[int]:
    # lower bound on uncut weight among vertices d..n-1: any k-split leaves at
    # least _balanced_pairs(r, k) pairs together, each costing at least the
    # smallest remaining edge weights
    n = len(w)
    bounds = [0] * (n + 1)
    for d in range(n):
        edge_weights = sorted(w[i][j] for i in range(d, n) for j in range(i + 1, n))
        bounds[d] = sum(edge_weights[: _balanced_pairs(n - d, k)])
    return bounds


class _Timeout(Exception):
    pass


def solve_exact(graph: ReducedGraph | np.ndarray, config: SolveConfig) -> SolveResult:
    """Depth-first branch-and-bound.

    Vertices are branched on by descending weighted degree (ties by index);
    heavy vertices first make the bound bite early. Group labels are opened
    in first-use order along that sequence, which removes the k!
    relabelings of every partition. A node is pruned when an optimistic cut
    value cannot beat the incumbent. The optimistic value is the total edge
    weight minus a lower bound on the weight that must stay uncut: weight
    already inside groups, the cheapest placement of each unassigned vertex
    against the assigned ones, and a pair-count bound among the unassigned.
    """
    start = time.perf_counter()
    weights = _weights(graph)
    trivial = _trivial(weights, config, "exact", start)
    if trivial is not None:
        return trivial
    k = config.k
    n = weights.shape[0]
    order = np.argsort(-weights.sum(axis=1), kind="stable")
    w = weights[np.ix_(order, order)].tolist()
    total = int(np.triu(weights, 1).sum())
    suffix = _suffix_bounds(w, k)
    deadline = start + config.time_limit_seconds

    # warm start keeps the incumbent strong from the first node on
    warm = solve_heuristic(
        weights, SolveConfig(k=k, mode="heuristic", seed=config.seed, restarts=min(config.restarts, 10),
                           time_limit_seconds=config.time_limit_seconds)
    )
    best_cut = warm.objective
    best_groups = [warm.assignment.groups[v] for v in order]

    groups = [-1] * n
    loads = [[0] * k for _ in range(n)]
    nodes = 0

    def search(d: int, used: int, uncut: int) -> None:
        nonlocal best_cut, best_groups, nodes
        nodes += 1
        if nodes & 1023 == 0 and time.perf_counter() > deadline:
            raise _Timeout
        if d == n:
            cut = total - uncut
            if cut > best_cut:
                best_cut = cut
                best_groups = groups.copy()
            return
        bound = uncut + suffix[d]
        if used == k:
            for v in range(d, n):
                bound += min(loads[v])
        if total - bound <= best_cut:
            return
        row = w[d]
        options = range(min(used + 1, k))
        for g in sorted(options, key=lambda x: (loads[d][x], x)):
            groups[d] = g
            for v in range(d + 1, n):
                loads[v][g] += row[v]
            search(d + 1, max(used, g + 1), uncut + loads[d][g])
            for v in range(d + 1, n):
                loads[v][g] -= row[v]
        groups[d] = -1

    try:
        search(0, 0, 0)
        optimal = True
    except _Timeout:
        optimal = False

    original = [0] * n
    for pos, v in enumerate(order):
        original[v] = best_groups[pos]
    groups_out = canonical(original)
    return SolveResult(
        Assignment(groups_out, k, evaluate(weights, groups_out, k)),
        optimal=optimal,
        method="exact",
        iterations=nodes,
        restarts=warm.restarts,
        wall_seconds=time.perf_counter() - start,
    )


def solve(graph: ReducedGraph | np.ndarray, config: SolveConfig) -> SolveResult:
    mode = config.mode
    if mode == "auto":
        mode = "exact" if len(_weights(graph)) <= config.exact_vertex_limit else "heuristic"
    if mode == "exact":
        return solve_exact(graph, config)
    return solve_heuristic(graph, config)


def sweep(graph: ReducedGraph | np.ndarray, k_values: Sequence[int], config: SolveConfig) -> list[SweepEntry]:
    """Solve independently for each k; a failing k is recorded, not raised."""
    entries = []
    for k in sorted(k_values):
        try:
            entries.append(SweepEntry(k, solve(graph, replace(config, k=k))))
        except ValueError as exc:
            entries.append(SweepEntry(k, error=str(exc)))
    return entries

