"""Figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "figure.figsize": (4.8, 3.4),
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

AXIS_LABELS = {
    "min_rate": r"minimum rate $R^{min}$ (bps/Hz)",
    "peak_power": r"peak power per sub-channel (W)",
}

_MARKERS = {"NOMA": "o", "OFDMA": "s"}
_LINES = {"jprc": "-", "water_filling": ":", "exhaustive": "--", "equal_power": "-."}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_convergence(traces: dict, path) -> Path:
    """Mean aggregate power against iteration, one curve per scheme."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for scheme, trace in traces.items():
            trace = np.asarray(trace)
            if trace.size:
                ax.plot(np.arange(1, trace.size + 1), trace, marker=_MARKERS.get(scheme),
                        markevery=max(1, trace.size // 10), label=scheme)
        ax.set_xlabel("iteration")
        ax.set_ylabel("aggregate transmit power (W)")
        ax.legend()
        return _save(fig, path)


def plot_sweep(stats: list, sweep_variable: str, path) -> Path:
    """Mean aggregate power with standard-error bars against the swept quantity."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        groups: dict = {}
        for s in stats:
            groups.setdefault((s.method, s.scheme), []).append(s)
        for (method, scheme), rows in groups.items():
            rows = sorted(rows, key=lambda s: s.sweep_value)
            x = [s.sweep_value for s in rows]
            y = [s.mean_aggregate_power_W for s in rows]
            err = [0.0 if math.isnan(s.stderr_W) else s.stderr_W for s in rows]
            ax.errorbar(x, y, yerr=err, linestyle=_LINES.get(method, "-"),
                        marker=_MARKERS.get(scheme), capsize=2, label=f"{method} {scheme}")
        ax.set_xlabel(AXIS_LABELS.get(sweep_variable, sweep_variable))
        ax.set_ylabel("mean aggregate transmit power (W)")
        ax.set_yscale("log")
        ax.legend()
        return _save(fig, path)


def plot_scheme_bars(stats: list, path, ratio=None) -> Path:
    """Bar chart of mean aggregate power per scheme (unswept experiments)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        labels = [f"{s.method}\n{s.scheme}" for s in stats]
        means = [s.mean_aggregate_power_W for s in stats]
        errs = [0.0 if math.isnan(s.stderr_W) else s.stderr_W for s in stats]
        ax.bar(labels, means, yerr=errs, capsize=3, color="0.6")
        ax.set_ylabel("mean aggregate transmit power (W)")
        if ratio is not None:
            ax.set_title(f"NOMA improvement over OFDMA: {100 * ratio:.1f}%")
        return _save(fig, path)


def plot_layout(scenario, path) -> Path:
    """BS and user positions with cell borders."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.6))
        half = scenario.cell_side / 2
        for m, (x, y) in enumerate(scenario.bs_positions):
            ax.add_patch(plt.Rectangle((x - half, y - half), 2 * half, 2 * half,
                                       fill=False, lw=0.8, color="0.4"))
            members = scenario.user_positions[scenario.serving_bs == m]
            ax.scatter(members[:, 0], members[:, 1], s=12, label=f"cell {m}")
        ax.scatter(scenario.bs_positions[:, 0], scenario.bs_positions[:, 1],
                   marker="^", s=40, color="k", label="BS")
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.legend(loc="upper left", bbox_to_anchor=(1.02, 1))
        return _save(fig, path)
