#!/usr/bin/env python3
"""Render sweep/training CSVs into the three report figures.

Consumes only the public CSV schema written by the simulator CLI:

    scheme,sweep_name,sweep_value,trial,seed,n_1h,n_2h,e_transmit_j,
    e_compute_j,e_total_j,t_ul_s,outage_frac,spca_status,accuracy

Kinds: accuracy (one line per scheme over rounds), outage (per-point mean
with std error bars, log y) and energy (per-point mean with std error bars).
Summary rows (non-integer trial column) are skipped; statistics are always
recomputed from the record rows.

Usage: plot.py --kind {accuracy|outage|energy} --in sweep.csv --out fig.png
"""
from __future__ import annotations

import argparse
import csv
import math
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EXPECTED_HEADER = [
    "scheme", "sweep_name", "sweep_value", "trial", "seed", "n_1h", "n_2h",
    "e_transmit_j", "e_compute_j", "e_total_j", "t_ul_s", "outage_frac",
    "spca_status", "accuracy",
]

KINDS = ("accuracy", "outage", "energy")

AXIS_LABELS = {
    "accuracy": ("training round", "test accuracy"),
    "outage": ("maximum transmit power (dBm)", "outage probability"),
    "energy": ("number of devices", "total energy (J)"),
}

VALUE_COLUMN = {"accuracy": "accuracy", "outage": "outage_frac",
                "energy": "e_total_j"}

STYLES = ["o-", "s--", "^-.", "d:", "v-", "*--"]


class PlotError(Exception):
    pass


def read_records(path: str | Path) -> list[dict[str, str]]:
    """Record rows of a schema-conformant CSV (summary rows skipped)."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise PlotError(f"{path}: empty file, no header") from None
            if header != EXPECTED_HEADER:
                missing = [c for c in EXPECTED_HEADER if c not in header]
                extra = [c for c in header if c not in EXPECTED_HEADER]
                raise PlotError(
                    f"{path}: header mismatch; missing columns {missing or 'none'}, "
                    f"unexpected columns {extra or 'none'}"
                )
            rows = [dict(zip(header, row)) for row in reader]
    except OSError as exc:
        raise PlotError(f"{path}: {exc}") from exc
    records = [r for r in rows if r["trial"].lstrip("-").isdigit()]
    if not records:
        raise PlotError(f"{path}: no record rows to plot")
    return records


def _series(records: list[dict[str, str]], column: str):
    """Per-scheme (x, mean, std) triples over the sweep values."""
    groups: dict[tuple[str, float], list[float]] = defaultdict(list)
    for r in records:
        if r[column] == "":
            continue
        groups[(r["scheme"], float(r["sweep_value"]))].append(float(r[column]))
    schemes = sorted({s for s, _ in groups})
    out = {}
    for scheme in schemes:
        xs = sorted(v for s, v in groups if s == scheme)
        means, stds = [], []
        for x in xs:
            vals = groups[(scheme, x)]
            means.append(sum(vals) / len(vals))
            if len(vals) > 1:
                m = means[-1]
                stds.append(math.sqrt(sum((v - m) ** 2 for v in vals)
                                      / (len(vals) - 1)))
            else:
                stds.append(0.0)
        out[scheme] = (xs, means, stds)
    if not out:
        raise PlotError(f"no usable values in column {column!r}")
    return out


def build_figure(kind: str, records: list[dict[str, str]]):
    """Assemble the figure for one kind; returns (figure, axes)."""
    if kind not in KINDS:
        raise PlotError(f"unknown kind {kind!r}, expected one of {KINDS}")
    series = _series(records, VALUE_COLUMN[kind])
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for i, (scheme, (xs, means, stds)) in enumerate(sorted(series.items())):
        style = STYLES[i % len(STYLES)]
        if kind == "accuracy":
            ax.plot(xs, means, style, label=scheme, markersize=3)
        else:
            ax.errorbar(xs, means, yerr=stds, fmt=style, label=scheme,
                        capsize=3, markersize=4)
    if kind == "outage":
        ax.set_yscale("log")
    xlabel, ylabel = AXIS_LABELS[kind]
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig, ax


def render(kind: str, csv_path: str | Path, out_path: str | Path) -> Path:
    """Read, plot, save.  Nothing is written when reading or plotting fails."""
    records = read_records(csv_path)
    fig, _ = build_figure(kind, records)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="csv_path", required=True,
                        help="input CSV (simulator schema)")
    parser.add_argument("--out", dest="out_path", required=True,
                        help="output image path (png/pdf/svg)")
    args = parser.parse_args(argv)
    try:
        out = render(args.kind, args.csv_path, args.out_path)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
