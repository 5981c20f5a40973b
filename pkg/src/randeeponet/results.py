"""Results table (one CSV row per run) and per-run trace files."""
from __future__ import annotations

import csv
import math
from pathlib import Path

RESULTS_VERSION = "1"
COLUMNS = (
    "version", "example", "n_train", "n_eval", "strategy", "seed", "epochs",
    "final_train_loss", "test_mse", "mean_r2", "train_seconds", "status",
)
FLOAT_COLUMNS = ("final_train_loss", "test_mse", "mean_r2", "train_seconds")
INT_COLUMNS = ("n_train", "n_eval", "seed", "epochs")
TRACE_COLUMNS = ("epoch", "train_loss", "epoch_seconds", "cum_seconds", "test_loss")


def fmt_float(v: float) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return "%.17g" % v


def row_key(row: dict) -> tuple:
    return (row["example"], int(row["n_train"]), int(row["n_eval"]), row["strategy"], int(row["seed"]))


def _encode(row: dict) -> dict:
    out = {}
    for col in COLUMNS:
        v = row.get(col, RESULTS_VERSION if col == "version" else "")
        out[col] = fmt_float(v) if col in FLOAT_COLUMNS and v != "" else str(v)
    return out


def _decode(raw: dict) -> dict:
    row = dict(raw)
    for col in INT_COLUMNS:
        row[col] = int(row[col])
    for col in FLOAT_COLUMNS:
        row[col] = float(row[col]) if row[col] != "" else float("nan")
    return row


def read_results(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        return []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != COLUMNS:
            raise ValueError(f"{path}: unexpected results header {reader.fieldnames}")
        rows = [_decode(r) for r in reader]
    for r in rows:
        if r["version"] != RESULTS_VERSION:
            raise ValueError(f"{path}: unsupported results version {r['version']!r}")
    return rows


def write_results(path, rows: list[dict]) -> None:
    """Write rows sorted by key; later rows replace earlier ones with the same key."""
    unique = {}
    for r in rows:
        unique[row_key(r)] = r
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\r\n")
        writer.writeheader()
        for key in sorted(unique):
            writer.writerow(_encode(unique[key]))


def append_result(path, row: dict) -> None:
    path = Path(path)
    new = not path.exists()
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\r\n")
        if new:
            writer.writeheader()
        writer.writerow(_encode(row))


def trace_name(row: dict) -> str:
    return (f"{row['example']}_ntrain{row['n_train']}_neval{row['n_eval']}"
            f"_{row['strategy']}_seed{row['seed']}")


def write_trace(path, record) -> None:
    test = dict(zip(record.test_epochs, record.test_loss))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(TRACE_COLUMNS)
        for i, loss in enumerate(record.train_loss):
            epoch = i + 1
            w.writerow([epoch, fmt_float(loss), fmt_float(record.epoch_seconds[i]),
                        fmt_float(record.cum_seconds[i]), fmt_float(test.get(epoch))])


def read_trace(path) -> dict[str, list]:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = {c: [] for c in TRACE_COLUMNS}
    for r in rows:
        out["epoch"].append(int(r["epoch"]))
        for c in TRACE_COLUMNS[1:]:
            out[c].append(float(r[c]) if r[c] else float("nan"))
    return out
