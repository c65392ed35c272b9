"""Matplotlib figures written next to the CSV output of a run."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.family": "serif",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "lines.linewidth": 1.2,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "xtick.top": True,
    "ytick.right": True,
    "savefig.dpi": 150,
}
# no timestamps or version strings, so reruns give identical files
_META = {"Software": None}


def plot_profiles(snapshots, path):
    """Three panels against x: hydrogen density, gas saturation, liquid pressure."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(11, 3.4), constrained_layout=True)
        colors = plt.get_cmap("viridis")(np.linspace(0.0, 0.9, max(len(snapshots), 1)))
        for snap, color in zip(snapshots, colors):
            label = f"{snap.time:g} y"
            axes[0].plot(snap.x, snap.rho_h_total, color=color, label=label)
            axes[1].plot(snap.x, snap.s_g, color=color, label=label)
            axes[2].plot(snap.x, snap.p_l, color=color, label=label)
        for ax, ylabel in zip(axes, ("H$_2$ density (kg/m$^3$)", "gas saturation", "liquid pressure (Pa)")):
            ax.set_xlabel("x (m)")
            ax.set_ylabel(ylabel)
        if snapshots:
            axes[2].legend(loc="best", frameon=False)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path


def plot_iterations(steps, path):
    """Newton-min iterations per accepted time step."""
    t = [st.t_end for st in steps]
    it = [st.report.iterations for st in steps]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2), constrained_layout=True)
        ax.vlines(t, 0, it, color="0.2", linewidth=1.5)
        ax.set_xlabel("time (years)")
        ax.set_ylabel("Newton-min iterations")
        ax.set_ylim(0, max(it, default=1) + 1)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path
