"""Figure rendering for the CLI report paths.

Every CSV the CLI writes gets a PNG next to it.  Bytes must be
reproducible, so the backend is pinned to Agg and the PNG metadata is
fixed (matplotlib would otherwise stamp its version string).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_PNG_META = {"Software": "mmwcov"}
_FIGSIZE = (6.4, 4.2)
_DPI = 130


def _finish(fig, ax, path, xlabel, ylabel):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_PNG_META)
    plt.close(fig)


def save_coverage_plot(path, x, series, xlabel, bands=None):
    """Coverage curves vs. threshold (dB) or cell radius (m).

    series maps label -> values; bands optionally maps a label to its
    95% half-widths, drawn as a shaded strip.
    """
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    x = np.asarray(x, dtype=float)
    for label, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        half = None if bands is None else bands.get(label)
        if half is not None:
            half = np.asarray(half, dtype=float)
            ax.fill_between(x, vals - half, vals + half, alpha=0.25, lw=0)
            ax.plot(x, vals, "o", ms=3.5, label=label)
        else:
            ax.plot(x, vals, label=label)
    ax.set_ylim(-0.02, 1.02)
    _finish(fig, ax, path, xlabel, "coverage probability")


def save_rate_plot(path, rc, series, normalized=False):
    """Rate (or rate ratio) vs. cell radius, one line per label."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    rc = np.asarray(rc, dtype=float)
    positive = False
    for label, vals in series.items():
        vals = np.asarray(vals, dtype=float)
        positive = positive or bool(np.any(vals > 0))
        ax.plot(rc, vals, marker="o", ms=3.5, label=label)
    if positive:
        ax.set_yscale("log")
    ylabel = "rate / bandwidth (bit/s/Hz)" if normalized else "rate (bit/s)"
    _finish(fig, ax, path, "cell radius (m)", ylabel)


def save_fit_plot(path, grid, target, model, d1, d2):
    """Fitted two-ball intensity against its target, log-log."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    grid = np.asarray(grid, dtype=float)
    keep = np.asarray(target, dtype=float) > 0
    ax.loglog(grid[keep], np.asarray(target)[keep], label="target intensity")
    ax.loglog(grid[keep], np.asarray(model)[keep], "--",
              label=f"two-ball fit (D1={d1:.1f} m, D2={d2:.1f} m)")
    _finish(fig, ax, path, "path-loss threshold x", "mean measure")
