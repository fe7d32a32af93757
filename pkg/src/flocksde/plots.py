"""Figure rendering for the report path (PNG files next to the CSV output)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ensemble import EnsembleResult
from .integrate import Trajectory
from .model import SystemState

__all__ = ["render_trajectory", "render_ensemble", "render_snapshots"]


def _log_if_positive(ax, values) -> None:
    finite = np.asarray(values)[np.isfinite(values)]
    if finite.size and (finite > 0).all():
        ax.set_yscale("log")


def render_trajectory(traj: Trajectory, out_path, title: str = "trajectory") -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(traj.times, traj.dispersion, label=r"$\sum_{i<j} |v_i-v_j|^2$")
    ax1.plot(traj.times, traj.v2_centered, label=r"$|v|^2$ (centered)", ls="--")
    _log_if_positive(ax1, traj.dispersion)
    ax1.set_xlabel("t")
    ax1.legend(fontsize=8)
    ax1.set_title("velocity dispersion")
    ax2.plot(traj.times, traj.max_pair_dist, label="max pair distance")
    ax2.plot(traj.times, traj.mean_pair_dist, label="mean pair distance", ls="--")
    ax2.set_xlabel("t")
    ax2.legend(fontsize=8)
    ax2.set_title("position spread")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_ensemble(result: EnsembleResult, out_path, title: str = "ensemble") -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    m, s = result.mean_dispersion, result.stderr_dispersion
    ax1.plot(result.times, m, color="C0", label="mean dispersion")
    ax1.fill_between(result.times, m - 3 * s, m + 3 * s, color="C0", alpha=0.2,
                     label=r"$\pm 3$ stderr")
    _log_if_positive(ax1, m)
    ax1.set_xlabel("t")
    ax1.legend(fontsize=8)
    ax1.set_title(f"dispersion over {result.n_finished} finished trials")
    ax2.plot(result.times, result.mean_pairdist, color="C1", label="mean pair distance")
    ax2.set_xlabel("t")
    ax2.legend(fontsize=8)
    ax2.set_title(f"group spread (diverged: {result.diverged_count})")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def render_snapshots(states: list[SystemState], out_path, title: str = "snapshots") -> None:
    """Quiver of positions and velocities; the first two coordinates are shown."""
    n = len(states)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 4), squeeze=False)
    for ax, state in zip(axes[0], states):
        if state.dim >= 2:
            ax.quiver(state.x[:, 0], state.x[:, 1], state.v[:, 0], state.v[:, 1],
                      angles="xy", width=0.004, color="C0")
        else:
            ax.quiver(state.x[:, 0], np.zeros(state.n_particles),
                      state.v[:, 0], np.zeros(state.n_particles),
                      angles="xy", width=0.004, color="C0")
        ax.set_title(f"t = {state.t:g}")
        ax.set_aspect("equal", adjustable="datalim")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
