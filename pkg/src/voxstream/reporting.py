"""Figure rendering for the CLI report paths (pitch, correlation, profiling).

Figures are written straight to files with the Agg backend so the commands
work headless; each helper takes the already-computed data and a destination
path and returns that path.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .pipeline import FRAME_MS, LatencyBudget
from .pitch import PitchTrack, THRESHOLDS

__all__ = ["save_pitch_figure", "save_pcc_figure", "save_profile_figure"]

_STYLE = {
    "figure.figsize": (8.0, 4.8),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


def save_pitch_figure(track: PitchTrack, path: str | Path) -> Path:
    """Two panels: voiced f0 per threshold over time, and frame energy."""
    path = Path(path)
    times = np.arange(track.frames) * FRAME_MS / 1e3
    with plt.rc_context(_STYLE):
        fig, (ax_f0, ax_en) = plt.subplots(2, 1, sharex=True)
        for i, threshold in enumerate(THRESHOLDS):
            voiced = ~track.unvoiced[i]
            f0 = np.where(voiced, track.f0_hz[i], np.nan)
            ax_f0.plot(times, f0, marker=".", markersize=3, linewidth=0.8, label=f"threshold {threshold:.2f}")
        ax_f0.set_ylabel("f0 [Hz]")
        ax_f0.legend(loc="upper right")
        ax_en.plot(times, track.energy, color="tab:gray", linewidth=0.8)
        ax_en.set_ylabel("energy (variance)")
        ax_en.set_xlabel("time [s]")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def save_pcc_figure(
    f0_a: np.ndarray, f0_b: np.ndarray, joint: np.ndarray, pcc: float, path: str | Path
) -> Path:
    """Scatter of jointly voiced f0 pairs with the fitted correlation in the title."""
    path = Path(path)
    a = np.asarray(f0_a)[joint]
    b = np.asarray(f0_b)[joint]
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 4.8))
        ax.scatter(a, b, s=8, alpha=0.7)
        lo = float(min(a.min(), b.min()))
        hi = float(max(a.max(), b.max()))
        ax.plot([lo, hi], [lo, hi], color="tab:gray", linewidth=0.8, linestyle="--")
        ax.set_xlabel("f0 of A [Hz]")
        ax.set_ylabel("f0 of B [Hz]")
        ax.set_title(f"jointly voiced frames: {a.shape[0]}, PCC {pcc:.4f}")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def save_profile_figure(step_times_ms: np.ndarray, budget: LatencyBudget, path: str | Path) -> Path:
    """Per-step compute trace against the real-time budget plus a histogram."""
    path = Path(path)
    times = np.asarray(step_times_ms, dtype=np.float64)
    with plt.rc_context(_STYLE):
        fig, (ax_tr, ax_hist) = plt.subplots(1, 2, figsize=(9.6, 3.6), width_ratios=(2.2, 1))
        ax_tr.plot(times, linewidth=0.7)
        ax_tr.axhline(budget.frame_ms, color="tab:red", linewidth=1.0, label=f"budget {budget.frame_ms:.0f} ms")
        ax_tr.axhline(budget.compute_ms_mean, color="tab:green", linewidth=1.0, label=f"mean {budget.compute_ms_mean:.2f} ms")
        ax_tr.set_xlabel("step")
        ax_tr.set_ylabel("compute [ms]")
        ax_tr.legend(loc="upper right")
        ax_hist.hist(times, bins=40)
        ax_hist.set_xlabel("compute [ms]")
        ax_hist.set_ylabel("steps")
        fig.suptitle(
            f"architectural {budget.architectural_ms:.0f} ms, end-to-end {budget.end_to_end_ms:.1f} ms, "
            f"RTF {budget.real_time_factor:.3f}"
        )
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
