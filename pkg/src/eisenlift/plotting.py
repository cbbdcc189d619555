"""Static figures written next to CLI outputs (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 10,
}


def _save(fig, path: Path):
    # no timestamp or version metadata, so repeated runs give the same file
    fig.savefig(path, metadata={"Software": None}, bbox_inches="tight")
    plt.close(fig)


def figure_path(output_path: str | Path) -> Path:
    return Path(output_path).with_suffix(".png")


def plot_lines(path, x, series: dict, xlabel: str, ylabel: str, title: str = "",
               logy: bool = False):
    """One panel with a line per entry of ``series`` (label -> y values)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label, y in series.items():
            ax.plot(x, y, label=label, lw=1.4)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if logy:
            ax.set_yscale("log")
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        _save(fig, Path(path))


def plot_two_panel(path, x, top: dict, bottom: dict, xlabel: str, top_label: str,
                   bottom_label: str, bottom_log: bool = True):
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.5))
        for label, y in top.items():
            ax1.plot(x, y, label=label, lw=1.4)
        ax1.set_ylabel(top_label)
        ax1.legend()
        for label, y in bottom.items():
            ax2.plot(x, y, label=label, lw=1.2)
        ax2.set_ylabel(bottom_label)
        ax2.set_xlabel(xlabel)
        if bottom_log:
            ax2.set_yscale("log")
        _save(fig, Path(path))
