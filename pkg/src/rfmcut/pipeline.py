"""End-to-end segmentation runs and their on-disk artifacts."""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from . import __version__
from .evaluation import (
    SPACES,
    ClusterStats,
    EvaluationError,
    KChoice,
    choose_k,
    cluster_stats,
    silhouette,
)
from .graph import Assignment, ReducedGraph, expand, full_objective, reduce
from .ingest import read_transactions
from .rfm import BINNINGS, FREQUENCY_UNITS, ScoredCustomer, compute_metrics, read_scores, score, write_scores
from .solver import MODES, SolveConfig, SolveResult, sweep


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class IntegrityError(RuntimeError):
    pass


def parse_k_range(text: str | list | tuple) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        lo, hi = text
    else:
        try:
            lo, _, hi = text.partition("..")
            lo, hi = (lo, hi) if hi else (lo, lo)
        except AttributeError:
            raise ConfigError(f"bad k range {text!r}") from None
    try:
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"bad k range {text!r}; expected e.g. 2..10") from None
    if lo < 2 or hi < lo:
        raise ConfigError(f"k range {lo}..{hi} must satisfy 2 <= low <= high")
    return lo, hi


@dataclass
class PipelineConfig:
    transactions: str = ""
    out: str = ""
    t: int = 5
    q: int = 3
    binning: str = "rank"
    frequency_unit: str = "invoice"
    k_range: tuple[int, int] = (2, 10)
    mode: str = "auto"
    seed: int = 0
    restarts: int = 50
    time_limit: float = 600.0
    exact_vertex_limit: int = 16
    workers: int = 1
    silhouette_space: str = "score"
    order: str = "appearance"
    first_n: int | None = None

    def validate(self) -> "PipelineConfig":
        self.k_range = parse_k_range(self.k_range)
        if self.t < 2:
            raise ConfigError("t must be at least 2")
        if self.q != 3:
            raise ConfigError("only q=3 (recency, frequency, monetary) is derivable from transactions")
        checks = [
            ("binning", self.binning, BINNINGS),
            ("frequency_unit", self.frequency_unit, FREQUENCY_UNITS),
            ("mode", self.mode, MODES),
            ("silhouette_space", self.silhouette_space, SPACES),
            ("order", self.order, ("appearance", "id")),
        ]
        for name, value, allowed in checks:
            if value not in allowed:
                raise ConfigError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")
        if self.restarts < 1 or self.workers < 1 or self.time_limit <= 0:
            raise ConfigError("restarts, workers and time_limit must be positive")
        if self.first_n is not None and self.first_n < 1:
            raise ConfigError("first_n must be positive")
        return self

    def solve_config(self) -> SolveConfig:
        return SolveConfig(
            k=self.k_range[0],
            mode=self.mode,
            seed=self.seed,
            restarts=self.restarts,
            time_limit_seconds=self.time_limit,
            exact_vertex_limit=self.exact_vertex_limit,
            workers=self.workers,
        )

    def to_dict(self) -> dict:
        data = asdict(self)
        data["k_range"] = f"{self.k_range[0]}..{self.k_range[1]}"
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        if "config" in data and isinstance(data["config"], Mapping):
            data = data["config"]  # a run manifest
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        return cls(**dict(data))


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def write_assignment(path: Path, customers: list[ScoredCustomer], groups: Mapping[str, int]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["customer_id", "cluster"])
        for c in customers:
            writer.writerow([c.customer_id, groups[c.customer_id]])


def read_assignment(path: Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["customer_id", "cluster"]:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return {row["customer_id"]: int(row["cluster"]) for row in reader}


def score_customers(config: PipelineConfig) -> list[ScoredCustomer]:
    """Load clean transactions, score every customer, then order and subset."""
    transactions = read_transactions(config.transactions)
    metrics = compute_metrics(transactions, config.frequency_unit)
    scored = score(metrics, config.t, config.binning)
    # compute_metrics returns customers in first-appearance order
    if config.order == "id":
        scored.sort(key=lambda c: c.customer_id)
    if config.first_n is not None:
        scored = scored[: config.first_n]
    return scored


@dataclass
class KOutcome:
    k: int
    result: SolveResult | None = None
    silhouette: float | None = None
    stats: ClusterStats | None = None
    error: str | None = None


@dataclass
class RunOutput:
    out: Path
    customers: list[ScoredCustomer]
    graph: ReducedGraph
    outcomes: list[KOutcome]
    ranking: list[KChoice]
    timings: dict[str, float] = field(default_factory=dict)


def run_segment(config: PipelineConfig) -> RunOutput:
    """Score, reduce, solve for every k, expand and evaluate; write artifacts."""
    config.validate()
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    def stage(name, fn, *args):
        t0 = time.perf_counter()
        try:
            return fn(*args)
        except (OSError, ValueError) as exc:
            raise StageError(name, str(exc)) from exc
        finally:
            timings[name] = round(time.perf_counter() - t0, 3)

    customers = stage("rfm", score_customers, config)
    graph = stage("graph", reduce, customers, config.t)
    lo, hi = config.k_range
    entries = stage("solver", sweep, graph, range(lo, hi + 1), config.solve_config())

    outcomes = []
    for entry in entries:
        outcome = KOutcome(entry.k, entry.result, error=entry.error)
        if entry.result is not None:
            seg = expand(graph, entry.result.assignment)
            try:
                outcome.silhouette = silhouette(customers, seg, config.silhouette_space).overall
            except EvaluationError as exc:
                outcome.error = str(exc)
            outcome.stats = cluster_stats(customers, seg)
            timings[f"solve_k{entry.k}"] = round(entry.result.wall_seconds, 3)
        outcomes.append(outcome)

    ranking = choose_k(
        [
            KChoice(o.k, o.result.objective if o.result else None, o.result.optimal if o.result else None, o.silhouette)
            for o in outcomes
        ]
    )

    write_scores(customers, out / "scores.csv")
    (out / "reduced_graph.json").write_text(graph.to_json() + "\n", encoding="utf-8")
    for o in outcomes:
        if o.result is None:
            continue
        seg = expand(graph, o.result.assignment)
        write_assignment(out / f"assignment_k{o.k}.csv", customers, seg.groups)
        _write_json(out / f"result_k{o.k}.json", o.result.to_dict(include_timing=False))
    _write_json(
        out / "sweep.json",
        {
            "ranking": [r.to_dict() for r in ranking],
            "errors": {str(o.k): o.error for o in outcomes if o.error},
            "cluster_stats": {str(o.k): o.stats.to_dict() for o in outcomes if o.stats},
        },
    )
    _write_json(out / "config.json", config.to_dict())
    _write_json(
        out / "manifest.json",
        {
            "config": config.to_dict(),
            "seed": config.seed,
            "input_sha256": _sha256(Path(config.transactions)),
            "versions": {
                "rfmcut": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
            "graph": {"vertices": len(graph), "edges": graph.edge_count, "customers": graph.n},
            "wall_seconds": timings,
        },
    )
    return RunOutput(out, customers, graph, outcomes, ranking, timings)


@dataclass
class LoadedK:
    k: int
    result: dict
    groups: dict[str, int]
    silhouette: float | None
    stats: ClusterStats


@dataclass
class LoadedRun:
    config: PipelineConfig
    customers: list[ScoredCustomer]
    graph: ReducedGraph
    ks: list[LoadedK]
    ranking: list[KChoice]


def _load(path: Path, loader):
    if not path.exists():
        raise FileNotFoundError(f"missing artifact: {path}")
    try:
        return loader(path)
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise ValueError(f"corrupt artifact {path}: {exc}") from exc


def load_run(run_dir: str | Path) -> LoadedRun:
    """Read a run directory back and re-verify every stored objective.

    Raises ``FileNotFoundError``/``ValueError`` for missing or unreadable
    files and :class:`IntegrityError` when an assignment does not reproduce
    its recorded objective.
    """
    run = Path(run_dir)
    if not run.is_dir():
        raise FileNotFoundError(f"run directory not found: {run}")
    config = _load(run / "config.json", lambda p: PipelineConfig.from_dict(json.loads(p.read_text())).validate())
    customers = _load(run / "scores.csv", read_scores)
    graph = _load(run / "reduced_graph.json", lambda p: ReducedGraph.from_json(p.read_text()))
    index = {c.score: p for p, c in enumerate(graph.classes)}
    try:
        class_of = {c.customer_id: index[tuple(c.score)] for c in customers}
    except KeyError as exc:
        raise IntegrityError(f"scores.csv has a score {exc.args[0]} absent from reduced_graph.json") from None
    if [c.multiplicity for c in graph.classes] != [
        sum(1 for v in class_of.values() if v == p) for p in range(len(graph))
    ]:
        raise IntegrityError("reduced_graph.json class counts disagree with scores.csv")

    lo, hi = config.k_range
    ks = []
    for k in range(lo, hi + 1):
        result_path = run / f"result_k{k}.json"
        if not result_path.exists():
            continue  # that k failed during the run
        result = _load(result_path, lambda p: json.loads(p.read_text()))
        groups = _load(run / f"assignment_k{k}.csv", read_assignment)
        if set(groups) != {c.customer_id for c in customers}:
            raise IntegrityError(f"assignment_k{k}.csv does not cover the scored customers")
        objective = full_objective(customers, groups)
        if objective != result["objective"]:
            raise IntegrityError(
                f"assignment_k{k}.csv gives objective {objective}, result_k{k}.json records {result['objective']}"
            )
        reduced = Assignment(tuple(result["groups"]), k, result["objective"])
        if len(reduced.groups) != len(graph):
            raise IntegrityError(f"result_k{k}.json has {len(reduced.groups)} groups for {len(graph)} classes")
        for cid, g in groups.items():
            if reduced.groups[class_of[cid]] != g:
                raise IntegrityError(f"assignment_k{k}.csv disagrees with result_k{k}.json for {cid}")
        try:
            sil = silhouette(customers, groups, config.silhouette_space).overall
        except EvaluationError:
            sil = None
        ks.append(LoadedK(k, result, groups, sil, cluster_stats(customers, groups)))

    ranking = choose_k([KChoice(x.k, x.result["objective"], x.result["optimal"], x.silhouette) for x in ks])
    return LoadedRun(config, customers, graph, ks, ranking)
