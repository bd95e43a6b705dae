"""
Static SVG figures built from report tables only.
"""
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

logger = logging.getLogger(__name__)

# fixed element ids and no timestamp keep the SVG bytes stable
matplotlib.rcParams["svg.hashsalt"] = "polymer-bounds"
matplotlib.rcParams["svg.fonttype"] = "none"

BOUND_COLOR = "#e74c3c"
EMPIRICAL_COLOR = "#3498db"


def save_svg(fig: plt.Figure, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.debug("wrote %s", path)
    return path


def plot_verification(frame: pd.DataFrame, title: str) -> plt.Figure:
    """
    Bound curve against empirical tail frequencies on a log scale, one panel per n.

    Args:
        frame (pd.DataFrame): Rows with columns n, abscissa, empirical_mean, stderr, bound.
        title (str): Figure title.

    Returns:
        plt.Figure: Matplotlib figure.
    """
    horizons = sorted(frame["n"].unique())
    with sns.axes_style("whitegrid"):
        fig, axes = plt.subplots(1, len(horizons), figsize=(5 * len(horizons), 4), squeeze=False)
    for ax, n in zip(axes[0], horizons):
        rows = frame[frame["n"] == n]
        sns.lineplot(data=rows, x="abscissa", y="bound", ax=ax, color=BOUND_COLOR, label="bound")
        visible = rows[rows["empirical_mean"] > 0]
        ax.errorbar(visible["abscissa"], visible["empirical_mean"], yerr=3 * visible["stderr"],
                    fmt="o", color=EMPIRICAL_COLOR, label="empirical (3 s.e.)")
        ax.set_yscale("log")
        ax.set_xlabel("x")
        ax.set_ylabel("probability")
        ax.set_title(f"n = {n}")
        ax.legend()
    fig.suptitle(title)
    fig.tight_layout()
    return fig


def plot_free_energy(summary: pd.DataFrame, title: str) -> plt.Figure:
    """Mean free energy per n with its bracket [beta Q[eta] - lambda(beta), 0]."""
    with sns.axes_style("whitegrid"):
        fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(summary["n"], summary["mean"], yerr=3 * summary["stderr"], fmt="o-",
                color=EMPIRICAL_COLOR, label="(1/n) mean ln W_n")
    ax.axhline(float(summary["lower_bracket"].iloc[0]), color=BOUND_COLOR, linestyle="--", label="lower bracket")
    ax.axhline(0.0, color="gray", linestyle=":")
    ax.set_xlabel("n")
    ax.set_ylabel("free energy")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig


def plot_cascade(theta_table: pd.DataFrame, polymer_estimate: float, title: str) -> plt.Figure:
    """v_m(theta)/m per level m against the polymer free-energy estimate."""
    with sns.axes_style("whitegrid"):
        fig, ax = plt.subplots(figsize=(6, 4))
    sns.lineplot(data=theta_table, x="theta", y="v_over_m", hue="m", marker="o", ax=ax,
                 palette="viridis")
    ax.axhline(polymer_estimate, color=BOUND_COLOR, linestyle="--", label="polymer estimate")
    finite = theta_table["v_over_m"].replace([np.inf, -np.inf], np.nan).dropna()
    if not finite.empty:
        ax.set_ylim(min(finite.min(), polymer_estimate) - 0.05, finite.quantile(0.9) + 0.05)
    ax.set_xscale("log")
    ax.set_xlabel("theta")
    ax.set_ylabel("v_m(theta) / m")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    return fig
