"""Figure rendering for report outputs.

Figures are a convenience view over the delimited files, never the
record of truth: everything plotted here is read back from the same
rows the CSV/JSONL writers emit.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _sweep_axis(values):
    try:
        xs = [float(v) for v in values]
        return xs, None
    except (TypeError, ValueError):
        return list(range(len(values))), [str(v) for v in values]


def render_sweep_figure(records: list, path: str, preset: str, sweep_param: str):
    """Two panels, standard and robust accuracy against the sweep values,
    one line per method with per-seed scatter behind the mean."""
    methods = sorted({r["method"] for r in records})
    values = sorted({r["sweep_value"] for r in records},
                    key=lambda v: (isinstance(v, str), v))
    xs, tick_labels = _sweep_axis(values)
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    panels = (("std_acc", "standard accuracy"), ("rob_acc_pgd20", "robust accuracy"))
    for ax, (field, label) in zip(axes, panels):
        for method in methods:
            means = []
            for v, x in zip(values, xs):
                pts = [r[field] for r in records
                       if r["method"] == method and r["sweep_value"] == v]
                means.append(float(np.mean(pts)) if pts else np.nan)
                ax.plot([x] * len(pts), pts, ".", alpha=0.35, markersize=4,
                        color=f"C{methods.index(method)}")
            ax.plot(xs, means, "-o", label=method, color=f"C{methods.index(method)}")
        ax.set_xlabel(sweep_param)
        ax.set_ylabel(label)
        ax.grid(True, alpha=0.3)
        if tick_labels is not None:
            ax.set_xticks(xs)
            ax.set_xticklabels(tick_labels)
    axes[0].legend(fontsize=8)
    fig.suptitle(preset)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bounds_figure(records: list, path: str):
    """Exact robust risk against the tightest certified bound, with the
    identity line; every marker should sit on or below it."""
    fig, ax = plt.subplots(figsize=(4.8, 4.4))
    for kind, marker in (("multiclass", "o"), ("binary", "s")):
        rows = [r for r in records if r.get("kind") == kind]
        if not rows:
            continue
        bounds = [min(r["bound_neighbor_mismatch"], r["bound_self_match"]) for r in rows]
        risks = [r["r_rob"] for r in rows]
        ax.plot(bounds, risks, marker, alpha=0.4, markersize=4, label=kind, linestyle="")
    lim = ax.get_xlim()
    hi = max(lim[1], ax.get_ylim()[1], 1.0)
    ax.plot([0, hi], [0, hi], "k--", linewidth=1, label="bound = risk")
    ax.set_xlabel("tightest bound")
    ax.set_ylabel("exact robust risk")
    ax.set_xlim(0, hi)
    ax.set_ylim(0, hi)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
