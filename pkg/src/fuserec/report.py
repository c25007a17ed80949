"""Benchmark report emission: CSV (fixed column set) and aligned text tables.

CSV is the machine-readable artifact; float formatting is pinned so that a
deterministic run reproduces the file byte-for-byte. The text format mirrors
the usual accuracy/latency table layout with "mean ± std" latency cells.
"""

from __future__ import annotations

import csv
import io
from typing import Dict, List, Sequence

REPORT_COLUMNS = [
    "config",
    "precision_at_10",
    "recall_at_10",
    "ndcg_at_10",
    "latency_mean_ms",
    "latency_std_ms",
    "train_seconds",
    "trainable_params",
    "seed",
]

_FLOAT6 = ("precision_at_10", "recall_at_10", "ndcg_at_10")
_FLOAT3 = ("latency_mean_ms", "latency_std_ms", "train_seconds")
_INTS = ("trainable_params", "seed")


def format_pm(mean: float, std: float) -> str:
    """Integer-millisecond "mean ± std" cell, e.g. 140.2/12.4 -> "140 ± 12"."""
    return f"{mean:.0f} ± {std:.0f}"


def _format_value(column: str, value) -> str:
    if column in _FLOAT6:
        return f"{float(value):.6f}"
    if column in _FLOAT3:
        return f"{float(value):.3f}"
    if column in _INTS:
        return str(int(value))
    return str(value)


def render_csv(rows: Sequence[Dict]) -> str:
    if not rows:
        raise ValueError("report needs at least one row")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for row in rows:
        writer.writerow([_format_value(col, row[col]) for col in REPORT_COLUMNS])
    return buf.getvalue()


def render_table(rows: Sequence[Dict]) -> str:
    if not rows:
        raise ValueError("report needs at least one row")
    headers = ["Config", "P@10", "R@10", "NDCG@10", "Latency (ms)", "Train (s)", "Params"]
    body: List[List[str]] = []
    for row in rows:
        body.append(
            [
                str(row["config"]),
                f"{float(row['precision_at_10']):.4f}",
                f"{float(row['recall_at_10']):.4f}",
                f"{float(row['ndcg_at_10']):.4f}",
                format_pm(float(row["latency_mean_ms"]), float(row["latency_std_ms"])),
                f"{float(row['train_seconds']):.1f}",
                str(int(row["trainable_params"])),
            ]
        )
    widths = [max(len(h), *(len(r[i]) for r in body)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip(),
        "  ".join("-" * widths[i] for i in range(len(headers))),
    ]
    for r in body:
        lines.append("  ".join(r[i].ljust(widths[i]) for i in range(len(headers))).rstrip())
    return "\n".join(lines) + "\n"


def emit_report(rows: Sequence[Dict], fmt: str, out_path) -> None:
    """Write rows as csv|table; raises on empty rows or unknown format."""
    if fmt == "csv":
        text = render_csv(rows)
    elif fmt == "table":
        text = render_table(rows)
    else:
        raise ValueError(f"format must be csv|table, got {fmt!r}")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_tradeoff(rows: Sequence[Dict], out_path) -> None:
    """Latency/accuracy pairs for external plotting (one row per config)."""
    if not rows:
        raise ValueError("report needs at least one row")
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["config", "latency_mean_ms", "ndcg_at_10"])
        for row in rows:
            writer.writerow(
                [
                    str(row["config"]),
                    _format_value("latency_mean_ms", row["latency_mean_ms"]),
                    _format_value("ndcg_at_10", row["ndcg_at_10"]),
                ]
            )


def read_report(path) -> List[Dict]:
    """Parse a report CSV back into typed rows (inverse of render_csv)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows: List[Dict] = []
        for raw in reader:
            row: Dict = {"config": raw["config"]}
            for col in _FLOAT6 + _FLOAT3:
                row[col] = float(raw[col])
            for col in _INTS:
                row[col] = int(raw[col])
            rows.append(row)
    return rows
