"""Static figures for run outputs (Agg backend, reproducible PNG bytes)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "figure.figsize": (5.0, 3.6),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
    "svg.hashsalt": "rosseland-ms",
}

# no timestamp / version chunks so identical data gives identical files
_PNG_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)


def plot_profiles(path, x, curves: dict, xlabel="x", ylabel="u", title=None) -> None:
    """Line plot of several 1D curves sharing ``x``."""
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for label, y in curves.items():
            ax.plot(x, y, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend()
        _save(fig, path)


def plot_field2d(path, values2d, extent=(0.0, 1.0, 0.0, 1.0), title=None, label="u") -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        im = ax.imshow(values2d.T, origin="lower", extent=extent, cmap="inferno", aspect="equal")
        fig.colorbar(im, ax=ax, label=label)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.grid(False)
        if title:
            ax.set_title(title)
        _save(fig, path)


def plot_convergence(path, eps, columns: dict, rates: dict) -> None:
    """Log-log error against ε with the fitted slope in each legend entry."""
    eps = np.asarray(eps, dtype=float)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for name, err in columns.items():
            err = np.asarray(err, dtype=float)
            if not np.all(np.isfinite(err)) or np.any(err <= 0):
                continue
            fit = rates.get(name)
            label = f"{name} (rate {fit.rate:.2f})" if fit is not None else name
            ax.loglog(eps, err, "o-", label=label)
        ax.loglog(eps, eps * 0.5 * ax.get_ylim()[1] / eps.max(), "k--", lw=0.8, label="slope 1")
        ax.set_xlabel("ε")
        ax.set_ylabel("error")
        ax.legend(fontsize=7)
        _save(fig, path)


def plot_table(path, z, a0) -> None:
    """Diagonal entries of the homogenized tensor against temperature."""
    a0 = np.asarray(a0)
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        for k in range(a0.shape[1]):
            ax.plot(z, a0[:, k, k], label=f"a0_{k + 1}{k + 1}")
        ax.set_xlabel("z")
        ax.set_ylabel("homogenized coefficient")
        ax.legend()
        _save(fig, path)


def plot_bounds_history(path, times, lows, highs, T_min, T_max) -> None:
    with plt.rc_context(RC):
        fig, ax = plt.subplots()
        ax.plot(times, highs, label="max u")
        ax.plot(times, lows, label="min u")
        ax.axhline(T_min, color="k", lw=0.7, ls=":")
        ax.axhline(T_max, color="k", lw=0.7, ls=":")
        ax.set_xlabel("t")
        ax.set_ylabel("temperature")
        ax.legend()
        _save(fig, path)
