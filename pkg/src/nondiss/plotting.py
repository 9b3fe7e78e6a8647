"""Figure rendering for the diagnose and report commands (Agg backend,
PNG files written next to the delimited output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "plot_bsm",
    "plot_drift",
    "plot_energy",
    "plot_rate",
    "plot_report_table",
    "plot_spectrum",
]


def _save(fig, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_spectrum(eigenvalues, path: str) -> None:
    ev = np.asarray(eigenvalues, dtype=complex)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(ev.real, ev.imag, s=12, alpha=0.7)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("Re")
    ax.set_ylabel("Im")
    ax.set_title("structural Jacobian spectrum")
    _save(fig, path)


def plot_bsm(trace, path: str) -> None:
    layers = [l for l, _ in trace]
    norms = [v for _, v in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(layers, norms, marker=".")
    ax.axhline(1.0, color="r", ls="--", lw=0.8, label="lower bound")
    ax.set_xlabel("layer l")
    ax.set_ylabel("|| d x_u^L / d x_u^l ||_2")
    ax.legend()
    _save(fig, path)


def plot_energy(trace, path: str) -> None:
    ts = [t for t, _ in trace]
    hs = [h for _, h in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, np.array(hs) - hs[0])
    ax.axhline(0.0, color="k", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("H(t) - H(0)")
    _save(fig, path)


def plot_drift(drifts, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(2, len(drifts) + 2), drifts, marker=".")
    ax.set_xlabel("layer")
    ax.set_ylabel("relative Jacobian change")
    _save(fig, path)


def plot_rate(curves: dict, path: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        ts = [t for t, _ in curve]
        vs = [v for _, v in curve]
        ax.plot(ts, vs, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("propagation rate (Frobenius)")
    ax.legend()
    _save(fig, path)


def plot_report_table(rows: list[dict], path: str) -> None:
    """Bar chart of test metric by (task, model)."""
    labels = [f"{r['task']}\n{r['model']}" for r in rows]
    vals = [float(r["test_mean"]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(rows)), 4))
    ax.bar(range(len(rows)), vals)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("test metric (mean)")
    _save(fig, path)
