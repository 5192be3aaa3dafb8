"""Recency / frequency / monetary metrics and integer scoring."""

from __future__ import annotations

import csv
import os
from bisect import bisect_left
from dataclasses import dataclass
from decimal import Decimal
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

from .ingest import Transaction

BINNINGS = ("rank", "value-quantile")
FREQUENCY_UNITS = ("invoice", "line")
SCORE_COLUMNS = ("customer_id", "recency_days", "frequency", "monetary", "r_score", "f_score", "m_score")

ScoreVector = tuple[int, ...]


class ScoringError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class CustomerMetrics:
    customer_id: str
    recency_days: int
    frequency: int
    monetary: Decimal


@dataclass(frozen=True, slots=True)
class ScoredCustomer:
    customer_id: str
    metrics: CustomerMetrics
    score: ScoreVector


def compute_metrics(
    transactions: Sequence[Transaction], frequency_unit: str = "invoice"
) -> list[CustomerMetrics]:
    """Aggregate transactions into one metrics record per customer.

    Records come back in order of each customer's first appearance in
    ``transactions``. Recency is the whole number of days (floored) between
    the customer's last invoice date and the latest invoice date overall.
    """
    if not transactions:
        raise ScoringError("no transactions")
    if frequency_unit not in FREQUENCY_UNITS:
        raise ScoringError(f"unknown frequency unit {frequency_unit!r}")

    last_seen: dict[str, object] = {}
    invoices: dict[str, set[str]] = {}
    lines: dict[str, int] = {}
    spend: dict[str, Decimal] = {}
    for t in transactions:
        cid = t.customer_id
        if cid not in last_seen:
            last_seen[cid] = t.invoice_date
            invoices[cid] = set()
            lines[cid] = 0
            spend[cid] = Decimal(0)
        elif t.invoice_date > last_seen[cid]:
            last_seen[cid] = t.invoice_date
        invoices[cid].add(t.invoice)
        lines[cid] += 1
        spend[cid] += t.quantity * t.unit_price

    latest = max(last_seen.values())
    out = []
    for cid, seen in last_seen.items():
        frequency = len(invoices[cid]) if frequency_unit == "invoice" else lines[cid]
        out.append(
            CustomerMetrics(
                customer_id=cid,
                recency_days=(latest - seen).days,
                frequency=frequency,
                monetary=spend[cid],
            )
        )
    return out


def rank_bins(values: Sequence, ids: Sequence[str], t: int) -> list[int]:
    """Equal-count bins 1..t by ascending value, ties broken by id."""
    n = len(values)
    if n < t:
        raise ScoringError(f"rank binning needs at least T={t} customers, got {n}")
    order = sorted(range(n), key=lambda i: (values[i], ids[i]))
    bins = [0] * n
    for r, i in enumerate(order):
        bins[i] = r * t // n + 1
    return bins


def quantile_bins(values: Sequence, t: int) -> list[int]:
    """Bins 1..t delimited by the t-quantiles of ``values``.

    Intervals are closed on the right, so a value equal to a cut point falls
    into the lower bin. Equal values always share a bin.
    """
    arr = np.asarray([float(v) for v in values])
    cuts = np.quantile(arr, np.arange(1, t) / t).tolist()
    return [bisect_left(cuts, float(v)) + 1 for v in values]


def score(
    metrics: Sequence[CustomerMetrics],
    t: int = 5,
    binning: str = "rank",
    extra: Mapping[str, Mapping[str, float]] | None = None,
) -> list[ScoredCustomer]:
    """Score every customer on a 1..t scale per variable.

    Frequency and monetary scores grow with the raw value; the recency score
    is inverted so the most recent customers receive ``t``. ``extra`` maps a
    variable name to per-customer values, scored like frequency and appended
    after (r, f, m) in insertion order.
    """
    if t < 2:
        raise ScoringError(f"T must be at least 2, got {t}")
    if binning not in BINNINGS:
        raise ScoringError(f"unknown binning {binning!r}")
    ids = [m.customer_id for m in metrics]
    columns = [
        [m.recency_days for m in metrics],
        [m.frequency for m in metrics],
        [m.monetary for m in metrics],
    ]
    for name, values in (extra or {}).items():
        try:
            columns.append([values[cid] for cid in ids])
        except KeyError as exc:
            raise ScoringError(f"variable {name!r} has no value for customer {exc.args[0]}") from None

    binned = []
    for values in columns:
        if binning == "rank":
            binned.append(rank_bins(values, ids, t))
        else:
            binned.append(quantile_bins(values, t))
    binned[0] = [t + 1 - b for b in binned[0]]

    return [
        ScoredCustomer(m.customer_id, m, tuple(col[i] for col in binned))
        for i, m in enumerate(metrics)
    ]


def order_customers(
    customers: Sequence[ScoredCustomer], order: str, appearance: Sequence[str] | None = None
) -> list[ScoredCustomer]:
    """Reorder customers by first appearance or by id."""
    if order == "id":
        return sorted(customers, key=lambda c: c.customer_id)
    if order == "appearance":
        if appearance is None:
            return list(customers)
        rank = {cid: i for i, cid in enumerate(appearance)}
        return sorted(customers, key=lambda c: rank[c.customer_id])
    raise ScoringError(f"unknown order {order!r}")


def write_scores(customers: Iterable[ScoredCustomer], out: IO[str] | str | os.PathLike) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_scores(customers, fh)
        return
    writer = csv.writer(out, lineterminator="\n")
    customers = list(customers)
    q = len(customers[0].score) if customers else 3
    header = list(SCORE_COLUMNS) + [f"x{i}_score" for i in range(3, q)]
    writer.writerow(header)
    for c in customers:
        m = c.metrics
        writer.writerow([c.customer_id, m.recency_days, m.frequency, m.monetary, *c.score])


def read_scores(source: IO[str] | str | os.PathLike) -> list[ScoredCustomer]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="", encoding="utf-8") as fh:
            return read_scores(fh)
    reader = csv.reader(source)
    header = next(reader)
    if tuple(header[: len(SCORE_COLUMNS)]) != SCORE_COLUMNS:
        raise ScoringError(f"unexpected score table header {header}")
    out = []
    for rec in reader:
        m = CustomerMetrics(rec[0], int(rec[1]), int(rec[2]), Decimal(rec[3]))
        out.append(ScoredCustomer(rec[0], m, tuple(int(x) for x in rec[4:])))
    return out
