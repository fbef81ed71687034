"""PNG figures for the CLI's ``--figures`` flag.

Each function takes the same data the CLI writes to CSV and saves one file.
The non-interactive Agg backend is selected so this works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_induced_cycles(rows, path):
    """Mean induced-cycle count per length against epsilon (log scale)."""
    eps = [r["epsilon"] for r in rows]
    lengths = sorted(int(k.split("_")[-1]) for k in rows[0] if k.startswith("mean_cycles_"))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for L in lengths:
        y = np.array([r[f"mean_cycles_{L}"] for r in rows], dtype=float)
        ax.plot(eps, np.where(y > 0, y, np.nan), marker="o", label=f"length {L}")
    ax.set_yscale("log")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("mean induced cycles")
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_unfulfilled(rows, path):
    """Per-realization unfulfilled percentage of the scheduler and the bound."""
    seeds = [r["seed"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(seeds, [r["scheme_pct"] for r in rows], "o", ms=3, label="scheduler")
    ax.plot(seeds, [r["bound_pct"] for r in rows], "x", ms=3, label="lower bound")
    ax.set_xlabel("seed")
    ax.set_ylabel("unfulfilled elements (%)")
    ax.legend()
    return _save(fig, path)


def plot_power_traces(traces, path):
    """Total transmit power per period, one line per realization."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for t in traces:
        if len(t):
            ax.plot(np.arange(1, len(t) + 1), 10 * np.log10(t.power_trace() * 1e3), lw=0.8,
                    label=f"seed {t.seed}")
    if 0 < len(traces) <= 8:
        ax.legend(fontsize=7)
    ax.set_xlabel("period")
    ax.set_ylabel("total power (dBm)")
    return _save(fig, path)


def plot_rate_cdf(summary, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.step(summary["cdf_x"], summary["cdf_y"], where="post")
    ax.axvline(1.0, color="grey", lw=0.6, ls="--")
    ax.set_xlabel("achieved rate / requirement")
    ax.set_ylabel("CDF")
    return _save(fig, path)


def plot_feasibility(rows, path):
    """Feasibility probability of both schemes versus ``Pmax``."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = [r[0] for r in rows]
    ax.plot(x, [r[1] for r in rows], marker="o", label="proposed")
    ax.plot(x, [r[2] for r in rows], marker="s", label="IS-based")
    ax.set_xlabel("Pmax (dBm)")
    ax.set_ylabel("probability of feasibility")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    return _save(fig, path)
