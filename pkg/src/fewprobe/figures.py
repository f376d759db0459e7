"""Render report figures (PNG) from the delimited outputs.

All figures are plain matplotlib renderings of the CSV tables the CLI
emits; they add no information beyond the files themselves.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402


def plot_benchmark(aggregates: pd.DataFrame, out_path: str | Path,
                   metric: str = "delta_aucpr") -> Path:
    """Mean metric vs support size per model, with 95% CI error bars."""
    out_path = Path(out_path)
    sub = aggregates[aggregates["metric"] == metric]
    fig, ax = plt.subplots(figsize=(6, 4))
    for model, group in sub.groupby("model"):
        group = group.sort_values("support_size")
        ax.errorbar(group["support_size"], group["mean"],
                    yerr=group["ci95_half_width"], marker="o",
                    capsize=3, label=model)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("support size")
    ax.set_ylabel(metric)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_divergence_sweep(sweep: pd.DataFrame, out_path: str | Path) -> Path:
    """Cross-entropy and precision norm along the inflation grid."""
    out_path = Path(out_path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    x = sweep["lambda_or_epoch"]
    ax1.plot(x, sweep["ce"], marker="o")
    ax1.set_xscale("log")
    ax1.set_yscale("log")
    ax1.set_xlabel("inflation parameter")
    ax1.set_ylabel("support cross-entropy")
    ax1.grid(True, alpha=0.3)
    ax2.plot(x, sweep["fro_norm_M0"], marker="o", label="class 0")
    ax2.plot(x, sweep["fro_norm_M1"], marker="s", label="class 1")
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    ax2.set_xlabel("inflation parameter")
    ax2.set_ylabel("precision Frobenius norm")
    ax2.legend()
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_eigenvalue_trajectories(free: pd.DataFrame, quad: pd.DataFrame,
                                 out_path: str | Path) -> Path:
    """Max precision eigenvalue per epoch: free descent vs quadratic probe."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(free["lambda_or_epoch"], free["max_eig_M0"],
            label="free descent (class 0)")
    ax.plot(free["lambda_or_epoch"], free["max_eig_M1"],
            label="free descent (class 1)", linestyle="--")
    ax.plot(quad["lambda_or_epoch"], quad["max_eig_M0"],
            label="quadratic probe (class 0)")
    ax.plot(quad["lambda_or_epoch"], quad["max_eig_M1"],
            label="quadratic probe (class 1)", linestyle="--")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("max eigenvalue of the precision")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path
