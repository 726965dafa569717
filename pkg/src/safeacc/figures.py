"""Matplotlib rendering for the report paths.

Every CLI command that writes delimited output also renders a figure
next to it.  Rendering is deterministic: fixed dpi, fixed metadata, no
timestamps.
"""

from __future__ import annotations

from typing import Dict, Mapping, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SAVE_KW = {"dpi": 110, "metadata": {"Software": "safeacc"}}


def _finish(fig: plt.Figure, path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_episode_trace(trace: Mapping[str, np.ndarray], path: str,
                       z0: float, sensor_range: float,
                       v_set: Optional[float] = None) -> None:
    """Separation, speeds and gear over one episode."""
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    t = trace["t"]
    axes[0].plot(t, trace["separation"], color="tab:blue", lw=1.0)
    axes[0].axhline(z0, color="tab:red", ls="--", lw=0.8, label="z0")
    axes[0].axhline(sensor_range, color="tab:gray", ls=":", lw=0.8,
                    label="sensor range")
    axes[0].set_ylabel("separation [m]")
    axes[0].legend(loc="upper right", fontsize=8)
    axes[1].plot(t, trace["v_host"], color="tab:blue", lw=1.0, label="host")
    axes[1].plot(t, trace["v_lead"], color="tab:orange", lw=1.0,
                 label="lead")
    if v_set is not None:
        axes[1].axhline(v_set, color="tab:green", ls="--", lw=0.8,
                        label="set speed")
    axes[1].set_ylabel("speed [m/s]")
    axes[1].legend(loc="upper right", fontsize=8)
    axes[2].step(t, trace["gear"], color="tab:purple", lw=1.0,
                 where="post")
    axes[2].set_ylabel("gear")
    axes[2].set_xlabel("time [s]")
    _finish(fig, path)


def plot_learning_curve(rows: Sequence, path: str) -> None:
    """Reward, fuel economy and safety counters over training."""
    ep = np.array([r.episode for r in rows])
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    axes[0].plot(ep, [r.reward for r in rows], lw=0.8, color="tab:blue")
    axes[0].set_ylabel("episode reward")
    axes[1].plot(ep, [r.mpg for r in rows], lw=0.8, color="tab:green")
    axes[1].set_ylabel("mpg")
    axes[2].plot(ep, [r.violations for r in rows], lw=0.8,
                 color="tab:red", label="violations")
    axes[2].plot(ep, [r.interventions for r in rows], lw=0.8,
                 color="tab:orange", label="interventions")
    axes[2].set_ylabel("count")
    axes[2].set_xlabel("episode")
    axes[2].legend(loc="upper right", fontsize=8)
    _finish(fig, path)


def plot_certification(trace: np.ndarray, path: str) -> None:
    """Worst-case rollout: barrier, its rate and the saturated input."""
    fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
    t = trace[:, 0]
    axes[0].plot(t, trace[:, 1], color="tab:blue", lw=1.0)
    axes[0].axhline(0.0, color="tab:red", ls="--", lw=0.8)
    axes[0].set_ylabel("h [m]")
    axes[1].plot(t, trace[:, 2], color="tab:orange", lw=1.0)
    axes[1].set_ylabel("dh/dt [m/s]")
    axes[2].plot(t[1:], trace[1:, 3], color="tab:gray", lw=0.8,
                 label="demand")
    axes[2].plot(t[1:], trace[1:, 4], color="tab:purple", lw=1.0,
                 label="applied")
    axes[2].set_ylabel("mu [m/s^2]")
    axes[2].set_xlabel("time [s]")
    axes[2].legend(loc="upper right", fontsize=8)
    _finish(fig, path)


def plot_mass_sweep(masses: Sequence[float],
                    series: Mapping[str, Sequence[float]],
                    path: str) -> None:
    """Fuel economy against laden mass, one line per controller."""
    fig, ax = plt.subplots(figsize=(7, 5))
    for label, mpg in sorted(series.items()):
        ax.plot(masses, mpg, marker="o", lw=1.0, label=label)
    ax.set_xlabel("mass [kg]")
    ax.set_ylabel("mpg")
    ax.legend(loc="upper right", fontsize=8)
    _finish(fig, path)


def plot_cycle(t: np.ndarray, v: np.ndarray, path: str) -> None:
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(t, v, lw=0.9, color="tab:blue")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("lead speed [m/s]")
    _finish(fig, path)
