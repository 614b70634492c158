"""Figures for the experiment tables. matplotlib is imported on first use."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders identical
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    fig.clf()
    return path


def plot_tau_vs_rd(rows, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    agents = sorted({r[1] for r in rows})
    for i in agents:
        pts = sorted((r[0], r[2]) for r in rows if r[1] == i)
        ax.step([p[0] for p in pts], [p[1] for p in pts], where="mid", marker="o", label=f"agent {i + 1}")
    ax.set_xlabel("R_d")
    ax.set_ylabel("threshold tau")
    ax.legend(fontsize=7)
    path = _save(fig, path)
    plt.close(fig)
    return path


def plot_asymptotic(rows, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    N = [r[0] for r in rows]
    ax.plot(N, [r[1] for r in rows], "o-", label="relaxed (soft constraint)")
    ax.plot(N, [r[2] for r in rows], "s--", label="hard bandwidth")
    ax.set_xscale("log")
    ax.set_xlabel("N")
    ax.set_ylabel("average WAoI")
    ax.legend()
    path = _save(fig, path)
    plt.close(fig)
    return path


def plot_cost_alpha(rows, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    alphas = sorted({r[0] for r in rows})
    data = [[r[2] for r in rows if r[0] == a] for a in alphas]
    ax.boxplot(data, labels=[f"{a:g}" for a in alphas], medianprops={"color": "red"})
    ax.set_xlabel("bandwidth ratio R_d / N")
    ax.set_ylabel("average cost per agent")
    path = _save(fig, path)
    plt.close(fig)
    return path


def plot_eps_scaling(rows, path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    Ns = sorted({r[0] for r in rows})
    means = [np.mean([r[2] for r in rows if r[0] == n]) for n in Ns]
    ax.loglog(Ns, means, "o-", label="simulated")
    ax.loglog(Ns, [means[0] * Ns[0] / n for n in Ns], "k:", label="1/N")
    ax.set_xlabel("N")
    ax.set_ylabel("eps_T(N)")
    ax.legend()
    path = _save(fig, path)
    plt.close(fig)
    return path
