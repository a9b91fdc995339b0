"""Figures for experiment traces: MSE and cost against MTTKRP-equivalents."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_trace(path) -> dict:
    """Columns of a trace CSV as float arrays (header comment lines skipped)."""
    with open(path) as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#")))
    header, body = rows[0], rows[1:]
    cols = {}
    for k, name in enumerate(header):
        cols[name] = np.array([float(r[k]) if r[k] else np.nan for r in body])
    return cols


def _median_curve(traces, x_key, y_key):
    grid = np.unique(np.concatenate([t[x_key] for t in traces if t[x_key].size]))
    grid = grid[np.isfinite(grid)]
    ys = []
    for t in traces:
        ok = np.isfinite(t[x_key]) & np.isfinite(t[y_key])
        if ok.sum() < 1:
            continue
        ys.append(np.interp(grid, t[x_key][ok], t[y_key][ok], right=np.nan))
    if not ys:
        return grid, np.full(grid.shape, np.nan)
    return grid, np.nanmedian(np.vstack(ys), axis=0)


def plot_metric(traces, y_key, ylabel, path, x_key="mttkrp_eq", xlabel="MTTKRP-equivalents"):
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for t in traces:
        ax.semilogy(t[x_key], t[y_key], color="0.7", linewidth=0.8)
    grid, med = _median_curve(traces, x_key, y_key)
    ax.semilogy(grid, med, color="k", linewidth=2, label=f"median of {len(traces)}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="upper right", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_experiment(out_dir, trace_paths) -> list:
    """Render cost (and MSE when ground truth was known) curves into ``out_dir``."""
    out_dir = Path(out_dir)
    traces = [read_trace(p) for p in trace_paths]
    figures = [plot_metric(traces, "cost", "cost", out_dir / "cost_vs_mttkrp.png")]
    if all("mse_avg" in t for t in traces):
        figures.append(plot_metric(traces, "mse_avg", "average MSE", out_dir / "mse_vs_mttkrp.png"))
        figures.append(plot_metric(traces, "mse_avg", "average MSE", out_dir / "mse_vs_sampled.png",
                                   x_key="sampled_entries", xlabel="sampled entries"))
    return figures
