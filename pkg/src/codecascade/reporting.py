"""Run artifacts: delimited curve/summary exports and rendered figures.

Curve files carry exactly (queries_processed, cumulative_successes,
cumulative_cost) per method label with fixed decimal formatting, so two
runs with identical config and seed produce byte-identical files. Each
export path also renders a PNG of the cumulative success and cost curves
next to the delimited output.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .ledger import CurvePoint, microusd_to_usd_str

CURVE_HEADER = ["queries_processed", "cumulative_successes", "cumulative_cost"]


def write_curves(path: str | Path, points: Sequence[CurvePoint]) -> Path:
    """One curve file per method label, cost rendered as fixed-point USD."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CURVE_HEADER)]
    for p in points:
        lines.append(
            f"{p.queries_processed},{p.cumulative_successes},{microusd_to_usd_str(p.cumulative_cost)}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_curves(path: str | Path) -> list[CurvePoint]:
    points = []
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            usd = row["cumulative_cost"]
            whole, frac = usd.split(".")
            micros = int(whole) * 10**6 + int(frac.ljust(6, "0")[:6])
            points.append(
                CurvePoint(
                    queries_processed=int(row["queries_processed"]),
                    cumulative_successes=int(row["cumulative_successes"]),
                    cumulative_cost=micros,
                )
            )
    return points


def plot_curves(
    curve_sets: Mapping[str, Sequence[CurvePoint]], out_path: str | Path
) -> Path:
    """Render cumulative successes and cost against queries processed."""
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig, (ax_success, ax_cost) = plt.subplots(1, 2, figsize=(11, 4.2))
    for label, points in curve_sets.items():
        xs = [p.queries_processed for p in points]
        ax_success.plot(xs, [p.cumulative_successes for p in points], label=label)
        ax_cost.plot(xs, [p.cumulative_cost / 1e6 for p in points], label=label)
    ax_success.set_xlabel("queries processed")
    ax_success.set_ylabel("successful queries")
    ax_cost.set_xlabel("queries processed")
    ax_cost.set_ylabel("cumulative cost (USD)")
    if curve_sets:
        ax_success.legend(fontsize=8)
        ax_cost.legend(fontsize=8)
    ax_success.grid(alpha=0.3)
    ax_cost.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def append_summary_row(path: str | Path, row: Mapping[str, object]) -> Path:
    """Summary table keyed by policy label; re-runnable row by row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = path.exists()
    fieldnames = list(row.keys())
    if exists:
        with open(path, encoding="utf-8", newline="") as fh:
            existing = list(csv.DictReader(fh))
        for r in existing:
            for key in r:
                if key not in fieldnames:
                    fieldnames.append(key)
    else:
        existing = []
    existing.append({k: str(v) for k, v in row.items()})
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for r in existing:
            writer.writerow(r)
    return path


def write_comparison_table(path: str | Path, rows: Sequence[Mapping[str, object]]) -> Path:
    """Tabular export of a simulation comparison (one row per policy/seed)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fieldnames: list[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in fieldnames})
    return path
