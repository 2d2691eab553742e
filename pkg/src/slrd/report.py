"""Delimited reports and rendered figures.

CSV files carry a header row and RFC-4180 quoting; floats are written
with full round-trip precision so reruns diff clean. Figures render
through the Agg backend with pinned metadata, which keeps the PNG bytes
reproducible for identical inputs.
"""

from __future__ import annotations

import csv
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .types import TraceEntry

_PNG_METADATA = {"Software": "slrd"}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_trace_csv(path, trace: Sequence[TraceEntry]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iter", "half_step", "objective_damped", "objective_raw"])
        for entry in trace:
            writer.writerow(
                [
                    entry.iteration,
                    entry.half_step,
                    _fmt(entry.objective_damped),
                    _fmt(entry.objective_raw),
                ]
            )


def write_row_csv(path, row: dict) -> None:
    """Single-record CSV: header from the dict keys, in order."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(row.keys()))
        writer.writerow([_fmt(v) for v in row.values()])


def write_rows_csv(path, rows: Sequence[dict]) -> None:
    """Multi-record CSV; all rows must share the first row's keys."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(keys)
        for row in rows:
            writer.writerow([_fmt(row[k]) for k in keys])


def rows_to_stdout(rows: Sequence[dict], stream) -> None:
    keys = list(rows[0].keys())
    writer = csv.writer(stream)
    writer.writerow(keys)
    for row in rows:
        writer.writerow([_fmt(row[k]) for k in keys])


def render_trace_figure(trace: Sequence[TraceEntry], path, title: str = "") -> None:
    """Objective per half-step, log scale; P1/P2 alternate along x."""
    xs = [i + 1 for i in range(len(trace))]
    damped = [e.objective_damped for e in trace]
    raw = [e.objective_raw for e in trace]
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(xs, damped, lw=1.4, color="#1f77b4", label="objective (damped)")
    ax.plot(xs, raw, lw=1.1, color="#d62728", alpha=0.8, label="objective (raw)")
    positive = [v for v in damped + raw if v > 0]
    if positive:
        ax.set_yscale("log")
    ax.set_xlabel("half-step (P1, P2 per outer iteration)")
    ax.set_ylabel("reconstruction objective")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(alpha=0.25, lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)


def render_pipeline_figure(rows: Sequence[dict], path) -> None:
    """Final objectives per layer after sequential decomposition."""
    layers = [int(r["layer"]) for r in rows]
    damped = [float(r["final_objective_damped"]) for r in rows]
    raw = [float(r["final_objective_raw"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.38
    ax.bar([l - width / 2 for l in layers], damped, width=width, color="#1f77b4", label="damped")
    ax.bar([l + width / 2 for l in layers], raw, width=width, color="#d62728", label="raw")
    ax.set_xticks(layers)
    ax.set_xlabel("layer")
    ax.set_ylabel("final reconstruction objective")
    ax.legend(frameon=False)
    ax.grid(axis="y", alpha=0.25, lw=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_METADATA)
    plt.close(fig)
