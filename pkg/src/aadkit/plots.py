"""Figure rendering for report outputs.

Each CLI report path renders a matplotlib figure next to its JSON/CSV so runs
are inspectable at a glance.  All figures are written to files (Agg backend);
nothing is shown interactively.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .decoder import AmiSeries, DecodingReport
from .pipeline import LayerSweepRow, SwitchRun
from .stats import ImprovementMap

_DPI = 150


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, dpi=_DPI, bbox_inches="tight", metadata={"Software": "aadkit"})
    plt.close(fig)


def plot_decoding_report(report: DecodingReport, path: str | Path) -> None:
    """Accuracy vs. decoding window duration."""
    durations = sorted(report.accuracy)
    acc = [report.accuracy[d] for d in durations]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(durations, acc, "o-", color="tab:blue")
    ax.axhline(0.5, color="gray", lw=0.8, ls="--", label="chance")
    ax.set_xscale("log")
    ax.set_xticks(durations)
    ax.set_xticklabels([f"{d:g}" for d in durations])
    ax.set_xlabel("window duration (s)")
    ax.set_ylabel("decoding accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"feature: {report.feature_name}")
    ax.legend(loc="lower right", frameon=False)
    _save(fig, path)


def plot_layer_sweep(rows: list[LayerSweepRow], path: str | Path) -> None:
    """Accuracy per layer, one line per window duration."""
    layers = sorted({r.layer for r in rows})
    durations = sorted({r.duration_s for r in rows})
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = np.arange(len(layers))
    for d in durations:
        acc = {r.layer: r.accuracy for r in rows if r.duration_s == d}
        ax.plot(xs, [acc.get(l, np.nan) for l in layers], "o-", label=f"{d:g} s")
    ax.set_xticks(xs)
    ax.set_xticklabels(layers, rotation=45, ha="right", fontsize=8)
    ax.set_xlabel("layer")
    ax.set_ylabel("decoding accuracy")
    ax.legend(frameon=False, fontsize=8)
    _save(fig, path)


def plot_switch(run: SwitchRun, path: str | Path) -> None:
    """Scaled averaged AMI trace plus mean transition times per duration."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 5.5))
    trace: AmiSeries = run.trace
    ax1.plot(trace.window_centers_s, trace.ami, color="tab:blue")
    ax1.axvline(run.switch_time_s, color="k", ls="--", lw=0.8)
    ax1.axhline(0.0, color="gray", lw=0.6)
    ax1.set_xlabel("time (s)")
    ax1.set_ylabel("scaled AMI")
    ax1.set_title(f"averaged AMI, {run.trace_duration_s:g} s window")

    durations = sorted(run.mean_transition)
    means = [run.mean_transition[d] for d in durations]
    ax2.bar(range(len(durations)), means, color="tab:orange")
    ax2.set_xticks(range(len(durations)))
    ax2.set_xticklabels([f"{d:g}" for d in durations])
    ax2.set_xlabel("window duration (s)")
    ax2.set_ylabel("mean transition time (s)")
    fig.tight_layout()
    _save(fig, path)


def plot_improvement(imp: ImprovementMap, path: str | Path) -> None:
    """Per-electrode improvement stems; insignificant electrodes sit at zero."""
    fig, ax = plt.subplots(figsize=(6, 3))
    x = np.arange(imp.delta_r.size)
    colors = np.where(imp.delta_r > 0, "tab:red", np.where(imp.delta_r < 0, "tab:blue", "lightgray"))
    ax.bar(x, imp.delta_r, color=list(colors))
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("electrode")
    ax.set_ylabel("improvement in r")
    ax.set_title(
        f"better A: {imp.frac_better_a:.0%}   better B: {imp.frac_better_b:.0%}   alpha={imp.alpha:g}"
    )
    _save(fig, path)
