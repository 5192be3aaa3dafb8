import io
from datetime import datetime
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfmcut.ingest import (
    IngestError,
    RawRow,
    parse,
    parse_text,
    preprocess,
    read_transactions,
    write_transactions,
)

HEADER = "Invoice,StockCode,Description,Quantity,InvoiceDate,Price,Customer ID,Country\n"


def row(invoice="489434", qty=12, date="2009-12-01 07:45:00", price="6.95", cid="13085", desc="WHITE HEART"):
    return f"{invoice},85048,{desc},{qty},{date},{price},{cid},United Kingdom\n"


def test_single_wellformed_row():
    rows, diags = parse_text(HEADER + row())
    assert diags == []
    assert len(rows) == 1
    r = rows[0]
    assert r.invoice == "489434"
    assert r.quantity == 12
    assert r.unit_price == Decimal("6.95")
    assert r.invoice_date == datetime(2009, 12, 1, 7, 45)
    assert r.customer_id == "13085"


def test_unparseable_date_is_reported_with_line_number():
    rows, diags = parse_text(HEADER + row(date="yesterday"))
    assert rows == []
    assert len(diags) == 1
    assert diags[0].line == 2
    assert "yesterday" in diags[0].message


def test_empty_after_header():
    rows, diags = parse_text(HEADER)
    assert rows == [] and diags == []


def test_us_date_format_and_float_customer_id():
    rows, _ = parse_text(HEADER + row(date="12/01/2010 08:26", cid="17850.0"))
    assert rows[0].invoice_date == datetime(2010, 12, 1, 8, 26)
    assert rows[0].customer_id == "17850"


def test_malformed_rows_skipped_order_preserved():
    text = HEADER + row(invoice="1") + "2,x,y\n" + row(invoice="3", qty="abc") + row(invoice="4")
    rows, diags = parse_text(text)
    assert [r.invoice for r in rows] == ["1", "4"]
    assert [d.line for d in diags] == [3, 4]


def test_missing_columns_is_fatal():
    with pytest.raises(IngestError, match="Customer ID"):
        parse_text("Invoice,StockCode,Quantity,InvoiceDate,Price,Country\n")


def test_unreadable_source_is_fatal(tmp_path):
    with pytest.raises(IngestError):
        parse(tmp_path / "nope.csv")


def test_missing_id_dropped():
    rows, _ = parse_text(HEADER + row(cid="") + row())
    result = preprocess(rows)
    assert len(result.transactions) == 1
    assert result.summary.missing_id == 1


def test_identical_rows_collapse():
    rows, _ = parse_text(HEADER + row() + row())
    result = preprocess(rows)
    assert len(result.transactions) == 1
    assert result.summary.duplicate == 1


def test_negative_quantity_and_price_dropped():
    rows, _ = parse_text(HEADER + row(qty=-3) + row(price="-11062.06") + row())
    result = preprocess(rows)
    assert len(result.transactions) == 1
    assert result.summary.negative == 2


def test_zero_quantity_kept_unless_asked():
    rows, _ = parse_text(HEADER + row(qty=0) + row(invoice="2", price="0.00"))
    assert len(preprocess(rows).transactions) == 2
    strict = preprocess(rows, drop_zero=True)
    assert strict.transactions == [] and strict.summary.zero == 2


def test_rule_order_attribution():
    # missing id and negative at once counts as missing id only
    rows, _ = parse_text(HEADER + row(cid="", qty=-1) + row(qty=-1) + row(qty=-1))
    s = preprocess(rows).summary
    assert (s.missing_id, s.negative, s.duplicate) == (1, 2, 0)


def test_duplicates_detected_after_trimming_whitespace():
    rows, _ = parse_text(HEADER + row() + row(desc="  WHITE HEART  "))
    assert len(preprocess(rows).transactions) == 1


def test_summary_counts(raw_csv):
    rows, _ = parse(raw_csv)
    result = preprocess(rows)
    s = result.summary
    assert s.input_rows == len(rows)
    assert s.input_rows - s.missing_id - s.negative - s.duplicate == s.output_rows
    assert s.customers == len({t.customer_id for t in result.transactions})
    assert s.duplicate >= 1


def test_clean_table_roundtrip(raw_csv):
    rows, _ = parse(raw_csv)
    transactions = preprocess(rows).transactions
    buf = io.StringIO()
    write_transactions(transactions, buf)
    assert buf.getvalue().splitlines()[0] == "customer_id,invoice,invoice_date,quantity,unit_price"
    buf.seek(0)
    assert read_transactions(buf) == transactions


raw_rows = st.builds(
    RawRow,
    invoice=st.sampled_from(["1", "2", "3"]),
    stock_code=st.just("A"),
    description=st.sampled_from([None, "X"]),
    quantity=st.integers(-2, 2),
    invoice_date=st.just(datetime(2011, 1, 1)),
    unit_price=st.sampled_from([Decimal("-1"), Decimal("0"), Decimal("2.5")]),
    customer_id=st.sampled_from([None, "", "a", "b"]),
    country=st.just("UK"),
)


@settings(max_examples=200, deadline=None)
@given(st.lists(raw_rows, max_size=30), st.booleans())
def test_preprocess_idempotent_and_accounted(rows, drop_zero):
    first = preprocess(rows, drop_zero=drop_zero)
    second = preprocess(first.kept_rows, drop_zero=drop_zero)
    assert second.transactions == first.transactions
    s = first.summary
    assert s.output_rows <= s.input_rows
    assert s.missing_id + s.negative + s.zero + s.duplicate + s.output_rows == s.input_rows
    for t in first.transactions:
        assert t.customer_id and t.quantity >= 0 and t.unit_price >= 0


@settings(max_examples=100, deadline=None)
@given(st.lists(raw_rows, max_size=20), st.randoms())
def test_surviving_set_is_order_independent(rows, random):
    shuffled = list(rows)
    random.shuffle(shuffled)
    assert sorted(map(repr, preprocess(rows).transactions)) == sorted(map(repr, preprocess(shuffled).transactions))
