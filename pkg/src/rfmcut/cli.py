"""Command line entry point: ``rfmcut preprocess|segment|report``.

Exit codes: 0 success, 1 stage failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .evaluation import format_cluster_table, format_sweep_table
from .ingest import IngestError, parse_many, preprocess, write_transactions
from .pipeline import (
    ConfigError,
    IntegrityError,
    PipelineConfig,
    StageError,
    load_run,
    run_segment,
)

log = logging.getLogger("rfmcut")

EXIT_OK, EXIT_STAGE, EXIT_USAGE = 0, 1, 2

# segment flags that map one-to-one onto PipelineConfig fields
SEGMENT_FIELDS = (
    "transactions", "out", "t", "k_range", "mode", "seed", "restarts", "time_limit",
    "exact_vertex_limit", "workers", "binning", "frequency_unit", "silhouette_space",
    "order", "first_n",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfmcut", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="clean raw Online Retail II style CSV files")
    p.add_argument("--input", action="append", required=True, help="raw CSV; repeat for several sheets")
    p.add_argument("--out", required=True, help="clean transaction CSV to write")
    p.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")
    p.add_argument("--drop-zero", action="store_true", help="also drop zero quantity or price rows")

    s = sub.add_parser("segment", help="score, reduce, solve and evaluate")
    s.add_argument("--config", help="JSON config or run manifest; flags override its values")
    s.add_argument("--transactions", help="clean transaction CSV")
    s.add_argument("--out", help="run directory")
    s.add_argument("--t", type=int)
    s.add_argument("--k-range", dest="k_range", help="inclusive range such as 2..10")
    s.add_argument("--mode", choices=("auto", "exact", "heuristic"))
    s.add_argument("--seed", type=int)
    s.add_argument("--restarts", type=int)
    s.add_argument("--time-limit", dest="time_limit", type=float)
    s.add_argument("--exact-vertex-limit", dest="exact_vertex_limit", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--binning", choices=("rank", "value-quantile"))
    s.add_argument("--frequency-unit", dest="frequency_unit", choices=("invoice", "line"))
    s.add_argument("--silhouette-space", dest="silhouette_space", choices=("score", "raw"))
    s.add_argument("--order", choices=("appearance", "id"))
    s.add_argument("--first-n", dest="first_n", type=int, help="keep only the first N scored customers")

    r = sub.add_parser("report", help="print sweep and cluster tables for a run")
    r.add_argument("run_dir")
    r.add_argument("--json", action="store_true", help="emit JSON instead of text tables")
    return parser


def cmd_preprocess(args) -> int:
    try:
        rows, diagnostics = parse_many(args.input)
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for d in diagnostics[:20]:
        log.warning("skipped %s", d)
    if len(diagnostics) > 20:
        log.warning("... %d more malformed rows", len(diagnostics) - 20)

    result = preprocess(rows, drop_zero=args.drop_zero)
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_transactions(result.transactions, out)
        summary = result.summary.to_dict()
        summary["malformed_rows"] = len(diagnostics)
        summary_path = Path(args.summary) if args.summary else out.with_suffix(".summary.json")
        summary_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        print(f"error: [preprocess] {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def segment_config(args) -> PipelineConfig:
    data: dict = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    config = PipelineConfig.from_dict(data)
    for name in SEGMENT_FIELDS:
        value = getattr(args, name)
        if value is not None:
            setattr(config, name, value)
    if not config.transactions or not config.out:
        raise ConfigError("--transactions and --out are required (by flag or config)")
    if not Path(config.transactions).is_file():
        raise ConfigError(f"transactions file not found: {config.transactions}")
    return config.validate()


def cmd_segment(args) -> int:
    try:
        config = segment_config(args)
    except (ConfigError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        run = run_segment(config)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    print(format_sweep_table(run.ranking))
    failed = [o for o in run.outcomes if o.result is None]
    for o in run.outcomes:
        if o.error:
            print(f"k={o.k}: {o.error}", file=sys.stderr)
    print(f"artifacts written to {run.out}")
    return EXIT_STAGE if failed else EXIT_OK


def cmd_report(args) -> int:
    try:
        run = load_run(args.run_dir)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrityError as exc:
        print(f"integrity error: {exc}", file=sys.stderr)
        return EXIT_STAGE

    if args.json:
        payload = {
            "ranking": [r.to_dict() for r in run.ranking],
            "cluster_stats": {str(x.k): x.stats.to_dict() for x in run.ks},
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK

    g = run.graph
    print(f"{g.n:,} customers, reduced graph {len(g)} vertices / {g.edge_count:,} edges")
    print()
    print(format_sweep_table(sorted(run.ranking, key=lambda r: r.k)))
    for x in run.ks:
        print()
        print(f"k = {x.k}")
        print(format_cluster_table(x.stats))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handler = {"preprocess": cmd_preprocess, "segment": cmd_segment, "report": cmd_report}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
