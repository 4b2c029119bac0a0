"""PaySim-schema transaction CSVs: loading, cleaning, feature selection and a
seeded synthetic generator for desk-scale runs."""
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np

from .dataset import FEATURE_NAMES, Dataset
from .errors import (AllRowsRejected, InvalidParams, MalformedRow, MissingColumn,
                     NoEligibleRows)

COLUMNS = ("step", "type", "amount", "nameOrig", "oldbalanceOrig", "newbalanceOrig",
           "nameDest", "oldbalanceDest", "newbalanceDest", "isFraud", "isFlaggedFraud")
# the public Kaggle file spells this column differently
ALIASES = {"oldbalanceorg": "oldbalanceOrig"}
TYPES = ("CASH-IN", "CASH-OUT", "DEBIT", "PAYMENT", "TRANSFER")
TYPE_CODES = {"TRANSFER": 0, "CASH-OUT": 1}
MONEY_FIELDS = ("amount", "oldbalanceOrig", "newbalanceOrig", "oldbalanceDest", "newbalanceDest")
DEFAULT_FRAUD_RATE = 0.0013  # 8213 fraud rows out of ~6.3M


@dataclass
class RawTransaction:
    step: Optional[float]
    type: Optional[str]
    amount: Optional[float]
    nameOrig: Optional[str]
    oldbalanceOrig: Optional[float]
    newbalanceOrig: Optional[float]
    nameDest: Optional[str]
    oldbalanceDest: Optional[float]
    newbalanceDest: Optional[float]
    isFraud: Optional[float]
    isFlaggedFraud: Optional[float]


class Rejection(NamedTuple):
    index: int
    reason: str


class Prepared(NamedTuple):
    records: List[RawTransaction]
    rejections: List[Rejection]


def _resolve_header(header):
    lookup = {}
    for pos, name in enumerate(header):
        key = name.strip().lower()
        lookup[ALIASES.get(key, key).lower()] = pos
    positions = {}
    for col in COLUMNS:
        if col.lower() not in lookup:
            raise MissingColumn(col)
        positions[col] = lookup[col.lower()]
    return positions


def _number(cell, line_no, col):
    cell = cell.strip()
    if cell == "":
        return None
    try:
        return float(cell)
    except ValueError:
        raise MalformedRow(line_no, f"{col}={cell!r} is not a number") from None


def _text(cell):
    cell = cell.strip()
    return cell or None


def parse_csv(text: str) -> List[RawTransaction]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn(COLUMNS[0]) from None
    positions = _resolve_header(header)
    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise MalformedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
        values = {}
        for col, pos in positions.items():
            if col in ("type", "nameOrig", "nameDest"):
                values[col] = _text(row[pos])
            else:
                values[col] = _number(row[pos], line_no, col)
        if values["type"] is not None:
            values["type"] = values["type"].upper().replace("_", "-")
        records.append(RawTransaction(**values))
    return records


def load_csv(path) -> List[RawTransaction]:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


def _problem(rec: RawTransaction) -> Optional[str]:
    for col in COLUMNS:
        v = getattr(rec, col)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return "null"
    numeric = [rec.step] + [getattr(rec, f) for f in MONEY_FIELDS]
    if any(math.isinf(v) for v in numeric):
        return "non_finite"
    if any(v < 0 for v in numeric):
        return "negative"
    if rec.type not in TYPES:
        return "unknown_type"
    if rec.isFraud not in (0.0, 1.0) or rec.isFlaggedFraud not in (0.0, 1.0):
        return "bad_label"
    return None


def prepare(records) -> Prepared:
    """Drop rows with nulls, negative or non-finite values, unknown types or bad flags."""
    kept, rejected = [], []
    for i, rec in enumerate(records):
        reason = _problem(rec)
        if reason is None:
            kept.append(rec)
        else:
            rejected.append(Rejection(i, reason))
    if not kept:
        raise AllRowsRejected(f"all {len(rejected)} rows rejected")
    return Prepared(kept, rejected)


def select_features(records, drop_step: bool = False) -> Dataset:
    """Keep TRANSFER and CASH-OUT rows; drop identifiers and the flagged-fraud column."""
    rows = [r for r in records if r.type in TYPE_CODES]
    if not rows:
        raise NoEligibleRows("no TRANSFER or CASH-OUT transactions")
    X = np.array([[TYPE_CODES[r.type], r.step, r.amount, r.oldbalanceOrig, r.newbalanceOrig,
                   r.oldbalanceDest, r.newbalanceDest] for r in rows], dtype=np.float64)
    y = np.array([int(r.isFraud) for r in rows], dtype=np.int8)
    names = FEATURE_NAMES
    if drop_step:
        X = np.delete(X, 1, axis=1)
        names = tuple(n for n in names if n != "step")
    return Dataset(X, y, names)


def records_to_dataset(records, drop_step: bool = False) -> Dataset:
    return select_features(prepare(records).records, drop_step)


# synthetic data

_HONEST_TYPES = ("CASH-IN", "CASH-OUT", "DEBIT", "PAYMENT", "TRANSFER")
_HONEST_TYPE_P = (0.22, 0.35, 0.01, 0.34, 0.08)


def _names(rng, prefix, n):
    return [f"{prefix}{v}" for v in rng.integers(10 ** 8, 10 ** 9, size=n)]


def synthetic_rows(n_rows: int, fraud_rate: float = DEFAULT_FRAUD_RATE, seed: int = 0,
                   noise: float = 0.05) -> List[list]:
    """Rows (as lists in COLUMNS order) of a PaySim-like ledger.

    Fraud rows are TRANSFER/CASH-OUT transactions that empty the origin
    account.  ``noise`` is the share of fraud rows that only partly drain the
    account and of honest TRANSFER/CASH-OUT rows that happen to drain it;
    lower noise means an easier, more separable batch.
    """
    if n_rows < 100 or not (0 < fraud_rate <= 0.5) or not (0 <= noise <= 1):
        raise InvalidParams("need n_rows >= 100, fraud_rate in (0, 0.5], noise in [0, 1]")
    rng = np.random.default_rng(seed)
    n_fraud = int(math.floor(n_rows * fraud_rate + 0.5))
    n_honest = n_rows - n_fraud

    types = rng.choice(len(_HONEST_TYPES), size=n_honest, p=_HONEST_TYPE_P)
    amount = np.round(rng.lognormal(np.log(4e4), 1.2, n_honest), 2)
    old_orig = np.round(rng.lognormal(np.log(2e5), 1.0, n_honest), 2)
    old_dest = np.round(rng.lognormal(np.log(5e5), 1.5, n_honest), 2)
    honest = []
    for i in range(n_honest):
        kind = _HONEST_TYPES[types[i]]
        amt, old = amount[i], old_orig[i]
        if kind in TYPE_CODES and rng.random() < noise:
            amt = old  # an honest customer emptying their own account
        if kind == "CASH-IN":
            new = old + amt
            new_dest = max(0.0, old_dest[i] - amt)
        else:
            amt = min(amt, old)
            new = old - amt
            new_dest = old_dest[i] + amt
        honest.append([int(rng.integers(1, 745)), kind, amt, old, round(new, 2),
                       old_dest[i], round(new_dest, 2), 0])

    fraud = []
    for _ in range(n_fraud):
        kind = "TRANSFER" if rng.random() < 0.5 else "CASH-OUT"
        old = round(float(rng.lognormal(np.log(3e5), 1.0)), 2)
        if rng.random() < noise:
            amt = round(old * float(rng.uniform(0.05, 0.6)), 2)
            old_d = round(float(rng.lognormal(np.log(5e5), 1.5)), 2)
            new_d = round(old_d + amt, 2)
        else:
            amt = old
            old_d, new_d = 0.0, 0.0
        fraud.append([int(rng.integers(1, 745)), kind, amt, old, round(old - amt, 2), old_d, new_d, 1])

    body = honest + fraud
    order = rng.permutation(len(body))
    orig = _names(rng, "C", len(body))
    dest = _names(rng, "C", len(body))
    rows = []
    for j, idx in enumerate(order):
        step, kind, amt, old, new, old_d, new_d, label = body[idx]
        rows.append([step, kind, float(amt), orig[j], float(old), float(new), dest[j],
                     float(old_d), float(new_d), label, 0])
    return rows


def synthetic_csv(n_rows: int, fraud_rate: float = DEFAULT_FRAUD_RATE, seed: int = 0,
                  noise: float = 0.05) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in synthetic_rows(n_rows, fraud_rate, seed, noise):
        writer.writerow([row[0], row[1], f"{row[2]:.2f}", row[3], f"{row[4]:.2f}", f"{row[5]:.2f}",
                         row[6], f"{row[7]:.2f}", f"{row[8]:.2f}", row[9], row[10]])
    return out.getvalue()


def generate_synthetic(path, n_rows: int, fraud_rate: float = DEFAULT_FRAUD_RATE, seed: int = 0,
                       noise: float = 0.05) -> Path:
    """Write a synthetic PaySim-schema CSV; identical arguments give identical bytes."""
    path = Path(path)
    path.write_text(synthetic_csv(n_rows, fraud_rate, seed, noise), encoding="utf-8")
    return path
