"""Charts of loss trajectories and of objective comparisons."""

import logging
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

DEFAULT_COLORS = ["0.2", "0.4", "0.6", "0.75", "0.85"]


def _ensure_parent(out_path):
    directory = os.path.dirname(out_path)
    if directory and not os.path.exists(directory):
        os.makedirs(directory)


def plot_trajectories(trajectories, out_path, column="total", title=None):
    """
    Line chart of one loss column per step, one line per run.

    Args:
        trajectories (dict): label -> list of StepRecord
        out_path (str): image file to write (extension picks the format)
        column (str): StepRecord field to plot
    """
    fig, ax = plt.subplots()
    ax.set_axisbelow(True)
    for label, records in trajectories.items():
        steps = [r.step for r in records]
        values = [getattr(r, column) for r in records]
        ax.plot(steps, values, linewidth=1.5, label=label)
    ax.yaxis.grid(alpha=0.25, color="black")
    ax.set_xlabel("Step", fontsize=12)
    ax.set_ylabel(f"{column} loss", fontsize=12)
    if title:
        ax.set_title(title, fontsize=14)
    if len(trajectories) > 1:
        ax.legend(loc="upper right", fontsize=10)

    _ensure_parent(out_path)
    plt.tight_layout()
    logger.info("Saving file in %s", out_path)
    plt.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_objective_comparison(rows, metric, out_path, y_label=None):
    """
    Bar chart of one toy metric per objective, with confidence-interval error bars.

    Args:
        rows (list): compare_objectives output
        metric (str): "ir" or "ad"
        out_path (str): image file to write
    """
    names = [row["objective"] for row in rows]
    means = [row[metric] for row in rows]
    conf_ints = [row[f"{metric}_conf_int"] or 0.0 for row in rows]
    positions = np.arange(len(rows))

    fig, ax = plt.subplots()
    ax.set_axisbelow(True)
    bars = ax.bar(
        positions,
        means,
        0.7,
        color=[DEFAULT_COLORS[i % len(DEFAULT_COLORS)] for i in range(len(rows))],
        yerr=conf_ints,
        capsize=4,
        error_kw={"alpha": 0.45},
    )
    ax.yaxis.grid(alpha=0.25, color="black")
    ax.set_xticks(positions)
    ax.set_xticklabels(names, fontsize=11)
    ax.set_xlabel("Objective", fontsize=12)
    ax.set_ylabel(y_label or metric.upper(), fontsize=12)
    ax.set_ylim(0, 110)

    for rect in bars:
        height = rect.get_height()
        ax.text(
            rect.get_x() + rect.get_width() * 0.5,
            height,
            f"{height:.1f}",
            ha="center",
            va="bottom",
            fontsize=10,
        )

    _ensure_parent(out_path)
    plt.tight_layout()
    logger.info("Saving file in %s", out_path)
    plt.savefig(out_path, dpi=150, bbox_inches="tight")
    plt.close(fig)
