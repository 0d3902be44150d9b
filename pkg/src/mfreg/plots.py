"""Figure rendering for the CLI report path (Agg backend, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from mfreg.funcdata import CurveSet
from mfreg.inference import ConfidenceBand
from mfreg.solver import FitResult


def save_band_figure(band: ConfidenceBand, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    t = band.grid.points
    ax.plot(t, band.center, color="C0", label="estimate")
    ax.plot(t, band.lower, "k:", linewidth=1)
    ax.plot(t, band.upper, "k:", linewidth=1,
            label=f"{band.level:.0%} pointwise band")
    ax.axhline(0.0, color="gray", linewidth=0.5)
    ax.set_xlabel("t")
    ax.set_ylabel("coefficient")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_coefficient_figure(fit: FitResult, path) -> None:
    if fit.beta_curves is None:
        raise ValueError("fit carries no coefficient curves")
    fig, ax = plt.subplots(figsize=(6, 4))
    t = fit.grid.points
    for j in range(fit.n_predictors):
        label = fit.labels[j] if fit.labels else f"x{j + 1}"
        style = "-" if j in fit.active_set else "--"
        ax.plot(t, fit.beta_curves[j], style, label=label)
    ax.axhline(0.0, color="gray", linewidth=0.5)
    ax.set_xlabel("t")
    ax.set_ylabel("coefficient")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_curves_figure(curves: CurveSet, path, max_curves: int = 50) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    shown = curves.values[:max_curves]
    ax.plot(curves.grid.points, shown.T, linewidth=0.6, alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel(curves.label)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_metrics_figure(rows, path) -> None:
    """Bar chart of scenario-level estimation errors and selection counts."""
    labels = [f"rho={m.rho:g}\nsig={m.sigma_label:g}" for m in rows]
    x = np.arange(len(rows))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(x - 0.2, [m.mse for m in rows], width=0.4, label="MSE")
    ax1.bar(x + 0.2, [m.omse for m in rows], width=0.4, label="oracle MSE")
    ax1.set_xticks(x, labels, fontsize=8)
    ax1.legend(frameon=False)
    ax2.bar(x - 0.2, [m.tp for m in rows], width=0.4, label="TP")
    ax2.bar(x + 0.2, [m.fp for m in rows], width=0.4, label="FP")
    ax2.set_xticks(x, labels, fontsize=8)
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
