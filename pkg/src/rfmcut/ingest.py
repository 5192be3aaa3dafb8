"""Transaction file parsing and cleaning."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import datetime
from decimal import Decimal, InvalidOperation
from typing import IO, Iterable, Sequence

SOURCE_COLUMNS = (
    "Invoice",
    "StockCode",
    "Description",
    "Quantity",
    "InvoiceDate",
    "Price",
    "Customer ID",
    "Country",
)
REQUIRED_COLUMNS = tuple(c for c in SOURCE_COLUMNS if c != "Description")
CLEAN_COLUMNS = ("customer_id", "invoice", "invoice_date", "quantity", "unit_price")

DATE_FORMATS = ("%Y-%m-%d %H:%M:%S", "%m/%d/%Y %H:%M", "%Y-%m-%d %H:%M")
CLEAN_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class IngestError(ValueError):
    """Raised when a source cannot be read at all."""


@dataclass(frozen=True, slots=True)
class RawRow:
    invoice: str
    stock_code: str
    description: str | None
    quantity: int
    invoice_date: datetime
    unit_price: Decimal
    customer_id: str | None
    country: str
    # trimmed source text of the eight columns; duplicate detection compares these
    source: tuple[str, ...] = field(default=(), compare=False, repr=False)
    line: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True, slots=True)
class Transaction:
    customer_id: str
    invoice: str
    invoice_date: datetime
    quantity: int
    unit_price: Decimal

    @property
    def amount(self) -> Decimal:
        return self.quantity * self.unit_price


@dataclass(frozen=True, slots=True)
class Diagnostic:
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class PreprocessSummary:
    input_rows: int = 0
    missing_id: int = 0
    negative: int = 0
    zero: int = 0
    duplicate: int = 0
    output_rows: int = 0
    customers: int = 0

    def to_dict(self) -> dict[str, int]:
        return {
            "input_rows": self.input_rows,
            "removed": {
                "missing_id": self.missing_id,
                "negative": self.negative,
                "zero": self.zero,
                "duplicate": self.duplicate,
            },
            "transactions": self.output_rows,
            "customers": self.customers,
        }


@dataclass
class PreprocessResult:
    transactions: list[Transaction]
    summary: PreprocessSummary
    kept_rows: list[RawRow]


def parse_date(text: str) -> datetime:
    for fmt in DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt)
        except ValueError:
            continue
    raise ValueError(f"unrecognised date {text!r}")


def normalize_customer_id(text: str) -> str | None:
    """Strip whitespace and a spurious ``.0`` left by spreadsheet exports."""
    text = text.strip()
    if not text or text.lower() == "nan":
        return None
    if text.endswith(".0") and text[:-2].isdigit():
        text = text[:-2]
    return text


def parse_quantity(text: str) -> int:
    value = Decimal(text)
    if value != value.to_integral_value():
        raise ValueError(f"non-integer quantity {text!r}")
    return int(value)


def parse(source: IO[str] | str | os.PathLike) -> tuple[list[RawRow], list[Diagnostic]]:
    """Parse a comma-separated transaction table with the Online Retail II header.

    Malformed rows are skipped and reported as diagnostics carrying their
    physical line number. Row order is preserved.
    """
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, newline="", encoding="utf-8-sig") as fh:
                return _parse_stream(fh)
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    return _parse_stream(source)


def _parse_stream(stream: IO[str]) -> tuple[list[RawRow], list[Diagnostic]]:
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise IngestError("source is empty: no header row") from None
    except (csv.Error, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable source: {exc}") from exc

    header = [h.strip().lstrip("﻿") for h in header]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")
    index = {name: header.index(name) for name in SOURCE_COLUMNS if name in header}

    rows: list[RawRow] = []
    diagnostics: list[Diagnostic] = []
    while True:
        line_no = reader.line_num + 1
        try:
            record = next(reader)
        except StopIteration:
            break
        except (csv.Error, UnicodeDecodeError) as exc:
            diagnostics.append(Diagnostic(line_no, f"unreadable row: {exc}"))
            continue
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) != len(header):
            diagnostics.append(
                Diagnostic(line_no, f"expected {len(header)} fields, got {len(record)}")
            )
            continue
        cells = {name: record[i].strip() for name, i in index.items()}
        try:
            row = RawRow(
                invoice=cells["Invoice"],
                stock_code=cells["StockCode"],
                description=cells.get("Description") or None,
                quantity=parse_quantity(cells["Quantity"]),
                invoice_date=parse_date(cells["InvoiceDate"]),
                unit_price=Decimal(cells["Price"]),
                customer_id=normalize_customer_id(cells["Customer ID"]),
                country=cells["Country"],
                source=tuple(cells.get(name, "") for name in SOURCE_COLUMNS),
                line=line_no,
            )
        except (ValueError, InvalidOperation) as exc:
            diagnostics.append(Diagnostic(line_no, str(exc) or "invalid number"))
            continue
        rows.append(row)
    return rows, diagnostics


def parse_many(paths: Iterable[str | os.PathLike]) -> tuple[list[RawRow], list[Diagnostic]]:
    """Parse and concatenate several sources (e.g. the two workbook sheets)."""
    rows: list[RawRow] = []
    diagnostics: list[Diagnostic] = []
    for path in paths:
        r, d = parse(path)
        rows.extend(r)
        diagnostics.extend(Diagnostic(x.line, f"{path}: {x.message}") for x in d)
    return rows, diagnostics


def _row_key(row: RawRow) -> tuple:
    if row.source:
        return row.source
    return (
        row.invoice,
        row.stock_code,
        row.description or "",
        str(row.quantity),
        row.invoice_date.strftime(CLEAN_DATE_FORMAT),
        str(row.unit_price),
        row.customer_id or "",
        row.country,
    )


def preprocess(rows: Sequence[RawRow], drop_zero: bool = False) -> PreprocessResult:
    """Apply the cleaning rules in order: missing id, negative fields, duplicates.

    Rows with zero quantity or price are kept unless ``drop_zero`` is set, in
    which case they are removed after the negative rule.
    """
    summary = PreprocessSummary(input_rows=len(rows))
    seen: set[tuple] = set()
    kept: list[RawRow] = []
    for row in rows:
        if not row.customer_id:
            summary.missing_id += 1
            continue
        if row.quantity < 0 or row.unit_price < 0:
            summary.negative += 1
            continue
        if drop_zero and (row.quantity == 0 or row.unit_price == 0):
            summary.zero += 1
            continue
        key = _row_key(row)
        if key in seen:
            summary.duplicate += 1
            continue
        seen.add(key)
        kept.append(row)

    transactions = [
        Transaction(
            customer_id=row.customer_id,
            invoice=row.invoice,
            invoice_date=row.invoice_date,
            quantity=row.quantity,
            unit_price=row.unit_price,
        )
        for row in kept
    ]
    summary.output_rows = len(transactions)
    summary.customers = len({t.customer_id for t in transactions})
    return PreprocessResult(transactions, summary, kept)


def write_transactions(transactions: Iterable[Transaction], out: IO[str] | str | os.PathLike) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="", encoding="utf-8") as fh:
            write_transactions(transactions, fh)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CLEAN_COLUMNS)
    for t in transactions:
        writer.writerow(
            [t.customer_id, t.invoice, t.invoice_date.strftime(CLEAN_DATE_FORMAT), t.quantity, t.unit_price]
        )


def read_transactions(source: IO[str] | str | os.PathLike) -> list[Transaction]:
    """Read a clean transaction table written by :func:`write_transactions`."""
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, newline="", encoding="utf-8") as fh:
                return read_transactions(fh)
        except OSError as exc:
            raise IngestError(f"cannot read {source}: {exc}") from exc
    reader = csv.DictReader(source)
    missing = [c for c in CLEAN_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise IngestError(f"missing required columns: {', '.join(missing)}")
    out = []
    for rec in reader:
        try:
            out.append(
                Transaction(
                    customer_id=rec["customer_id"],
                    invoice=rec["invoice"],
                    invoice_date=datetime.strptime(rec["invoice_date"], CLEAN_DATE_FORMAT),
                    quantity=int(rec["quantity"]),
                    unit_price=Decimal(rec["unit_price"]),
                )
            )
        except (ValueError, InvalidOperation) as exc:
            raise IngestError(f"line {reader.line_num}: {exc}") from exc
    return out


def parse_text(text: str) -> tuple[list[RawRow], list[Diagnostic]]:
    """Convenience wrapper for in-memory tables."""
    return parse(io.StringIO(text))


__all__ = [
    "CLEAN_COLUMNS",
    "Diagnostic",
    "IngestError",
    "PreprocessResult",
    "PreprocessSummary",
    "RawRow",
    "SOURCE_COLUMNS",
    "Transaction",
    "parse",
    "parse_many",
    "parse_text",
    "preprocess",
    "read_transactions",
    "write_transactions",
]
