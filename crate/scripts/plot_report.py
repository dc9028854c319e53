#!/usr/bin/env python3
"""Plot rfc-hypgcn outputs.

    plot_report.py <run-dir> [--out figure.png]

Reads report.csv (and sim_layers.csv when present) from a run directory and
draws one panel per figure family found: per-layer RFC storage reductions,
Dyn-Mult-PE efficiency and delay against sparsity, and per-block pruning
counts.
"""

import argparse
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def by_metric(rows):
    table = defaultdict(dict)
    for r in rows:
        table[r["metric"]][r["layer"]] = float(r["value"])
    return table


def storage_panel(ax, table):
    layers = [l for l in table["reduction_exact"] if l != "all"]
    x = range(len(layers))
    for i, key in enumerate(["reduction_exact", "reduction_sized", "reduction_with_codes"]):
        ax.bar([j + 0.27 * (i - 1) for j in x], [table[key][l] for l in layers], width=0.27, label=key)
    ax.set_xticks(list(x), layers, rotation=30)
    ax.set_ylabel("storage reduction (%)")
    ax.axhline(0, color="black", linewidth=0.5)
    ax.legend(fontsize="small")


def sim_panel(ax, groups):
    by_q = defaultdict(list)
    for g in groups:
        by_q[g["queues"]].append((float(g["sparsity"]), float(g["efficiency"]) * 100, float(g["delay_pct"])))
    for q, pts in sorted(by_q.items()):
        pts.sort()
        s = [p[0] for p in pts]
        ax.plot(s, [p[1] for p in pts], marker="o", label=f"{q} queues: efficiency")
        ax.plot(s, [p[2] for p in pts], marker="x", linestyle="--", label=f"{q} queues: delay")
    ax.set_xlabel("feature sparsity")
    ax.set_ylabel("%")
    ax.legend(fontsize="small")


def prune_panel(ax, table):
    blocks = sorted((l for l in table["params"]), key=int)
    ax.bar(blocks, [table["params"][b] for b in blocks], label="params")
    ax.bar(blocks, [table["nonzero_params"][b] for b in blocks], label="non-zero")
    ax.set_xlabel("block")
    ax.set_yscale("log")
    ax.legend(fontsize="small")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("run_dir", type=Path)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    table = by_metric(read_rows(args.run_dir / "report.csv"))
    layers_csv = args.run_dir / "sim_layers.csv"
    panels = []
    if "reduction_exact" in table:
        panels.append(lambda ax: storage_panel(ax, table))
    if layers_csv.exists():
        groups = read_rows(layers_csv)
        panels.append(lambda ax: sim_panel(ax, groups))
    if "params" in table:
        panels.append(lambda ax: prune_panel(ax, table))
    if not panels:
        sys.exit(f"nothing to plot in {args.run_dir}")

    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4), squeeze=False)
    for draw, ax in zip(panels, axes[0]):
        draw(ax)
    fig.tight_layout()
    out = args.out or args.run_dir / "report.png"
    fig.savefig(out, dpi=120)
    print(out)


if __name__ == "__main__":
    main()
