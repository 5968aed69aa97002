"""Loss log CSV: one row per iteration."""

from __future__ import annotations

import csv
from pathlib import Path

COLUMNS = ["iter", "stage", "rgb", "sil", "kps", "nc", "fa", "total"]


def write_loss_log(path: str | Path, rows: list[dict]):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in COLUMNS})


def read_loss_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as f:
        return [dict(row) for row in csv.DictReader(f)]
