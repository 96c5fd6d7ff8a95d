"""Figure rendering for schedules, heatmaps and training logs.

All functions write straight to files through the Agg backend so they work
headless; each figure sits next to the CSV carrying the same data.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .ppo import TrainingLog
from .robustness import Heatmap, PulseSchedule

_PULSE_PANELS = (
    (0, "$\\Omega_1$ (rad/t)"),
    (2, "$\\Omega_2$ (rad/t)"),
    (4, "$J$ (rad/t)"),
    (1, "$\\Delta_1$ (rad/t)"),
    (3, "$\\Delta_2$ (rad/t)"),
)


def save_pulse_figure(schedule: PulseSchedule, path: str) -> None:
    """Stepwise panels for the five control channels."""
    fig, axes = plt.subplots(5, 1, figsize=(7, 9), sharex=True)
    t_edges = np.append(schedule.times, len(schedule) * schedule.dt)
    for ax, (col, label) in zip(axes, _PULSE_PANELS):
        values = np.append(schedule.controls[:, col], schedule.controls[-1, col])
        ax.step(t_edges, values, where="post", lw=1.2)
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[-1].set_xlabel("time")
    fig.suptitle("control schedule")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_heatmap_figure(heatmap: Heatmap, path: str,
                        contour_level: float = -2.0) -> None:
    """Log-infidelity surface with the F = 0.99 contour marked."""
    fig, ax = plt.subplots(figsize=(6, 5))
    extent = (heatmap.d_delta_grid[0], heatmap.d_delta_grid[-1],
              heatmap.d_omega_grid[0], heatmap.d_omega_grid[-1])
    im = ax.imshow(heatmap.values, origin="lower", extent=extent,
                   aspect="auto", cmap="viridis")
    if heatmap.values.min() < contour_level < heatmap.values.max():
        ax.contour(heatmap.d_delta_grid, heatmap.d_omega_grid, heatmap.values,
                   levels=[contour_level], colors="white", linewidths=1.0)
    ax.set_xlabel(r"$\delta\Delta$")
    ax.set_ylabel(r"$\delta\Omega$")
    ax.set_title(r"$\log_{10}(1 - F)$")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_training_figure(log: TrainingLog, path: str) -> None:
    """Per-episode reward/fidelity traces plus evaluation checkpoints."""
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    if log.episodes:
        ep = np.array([r.episode for r in log.episodes])
        rew = np.array([r.total_reward for r in log.episodes])
        fid = np.array([r.final_fidelity for r in log.episodes])
        window = max(1, len(ep) // 200)
        kernel = np.ones(window) / window
        ax1.plot(ep, np.convolve(rew, kernel, mode="same"), lw=0.9)
        ax2.plot(ep, np.convolve(fid, kernel, mode="same"), lw=0.9,
                 label="training episodes")
    if log.evals:
        ax2.plot([e.episodes_done for e in log.evals],
                 [e.fidelity for e in log.evals],
                 "o-", ms=3, lw=0.8, label="deterministic eval")
        ax2.legend(loc="lower right", fontsize=8)
    ax1.set_ylabel("episode reward")
    ax2.set_ylabel("final fidelity")
    ax2.set_xlabel("episode")
    for ax in (ax1, ax2):
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_report_figure(labels: list[str], areas: list[float], path: str,
                       threshold: float = 0.99) -> None:
    """Robust-area comparison across evaluated models."""
    fig, ax = plt.subplots(figsize=(6, 4))
    pos = np.arange(len(labels))
    ax.barh(pos, areas, color="tab:blue")
    ax.set_yticks(pos)
    ax.set_yticklabels(labels, fontsize=8)
    ax.invert_yaxis()
    ax.set_xlabel(f"fraction of grid with F >= {threshold}")
    ax.set_title("robust area")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_scan_figure(grid: np.ndarray, deviations: np.ndarray,
                     j_star: float | None, path: str) -> None:
    """Entangler-coefficient gap across the coupling scan."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, deviations, lw=1.2)
    if j_star is not None:
        ax.axvline(j_star, color="tab:red", ls="--", lw=1.0,
                   label=f"$J/\\omega$ = {j_star:.4f}")
        ax.legend()
    ax.set_xlabel(r"$J/\omega$")
    ax.set_ylabel(r"$\sigma_1 - \sigma_2$")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
