import csv
import os
import sys
from decimal import Decimal
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rfmcut.rfm import CustomerMetrics, ScoredCustomer  # noqa: E402

RAW_HEADER = ["Invoice", "StockCode", "Description", "Quantity", "InvoiceDate", "Price", "Customer ID", "Country"]

# criterion id -> (status, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def make_customers(scores, prefix="c") -> list[ScoredCustomer]:
    """Scored customers with the given score vectors and placeholder metrics."""
    out = []
    for i, s in enumerate(scores):
        cid = f"{prefix}{i:04d}"
        m = CustomerMetrics(cid, recency_days=10 * i, frequency=1 + i % 7, monetary=Decimal(i) + Decimal("0.5"))
        out.append(ScoredCustomer(cid, m, tuple(int(x) for x in s)))
    return out


def random_scores(rng: np.random.Generator, n: int, t: int, q: int = 3) -> list[tuple[int, ...]]:
    return [tuple(int(x) for x in row) for row in rng.integers(1, t + 1, size=(n, q))]


def write_raw(path: Path, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_HEADER)
        writer.writerows(rows)
    return path


def synthetic_raw_rows(seed: int = 7, n_rows: int = 600, n_customers: int = 80) -> list[list]:
    """Online Retail II shaped rows with some missing ids, returns and duplicates."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_rows):
        cid = "" if rng.random() < 0.05 else f"{13000 + int(rng.integers(n_customers))}.0"
        day = int(rng.integers(0, 365))
        month, dom = 1 + day // 31, 1 + day % 28
        date = f"2011-{min(month, 12):02d}-{dom:02d} {int(rng.integers(8, 19)):02d}:{int(rng.integers(60)):02d}:00"
        qty = int(rng.choice([1, 2, 3, 4, 6, 12, 24, -1]))
        price = rng.choice(["0.42", "0.85", "1.25", "2.55", "4.95", "7.95"])
        rows.append([f"5{int(rng.integers(2000)):05d}", "85123A", "WHITE HEART", qty, date, price, cid, "United Kingdom"])
    rows.extend(rows[:15])
    return rows


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def raw_csv(tmp_path):
    return write_raw(tmp_path / "raw.csv", synthetic_raw_rows())


@pytest.fixture(scope="session")
def dataset_paths():
    """Online Retail II sheets as CSV, from RFMCUT_ONLINE_RETAIL (paths joined by os.pathsep)."""
    value = os.environ.get("RFMCUT_ONLINE_RETAIL", "")
    paths = [p for p in value.split(os.pathsep) if p]
    if not paths or not all(Path(p).is_file() for p in paths):
        return None
    return paths


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k.split()[0])):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{status:<4}  AC{key}: {detail}")
