"""Pitch-contour agreement metric between two recordings.

The Pearson correlation is computed over frames voiced in *both* contours on
the middle-threshold (0.10) pitch track, so the comparison is unaffected by
unvoiced filler values and by affine differences in pitch register.
"""

from __future__ import annotations

import numpy as np

from .errors import MetricError
from .pitch import THRESHOLDS, extract_pitch_energy

__all__ = ["PCC_THRESHOLD_INDEX", "f0_pcc", "f0_contour", "jointly_voiced_pcc"]

PCC_THRESHOLD_INDEX = THRESHOLDS.index(0.10)


def f0_pcc(a: np.ndarray, b: np.ndarray) -> float:
    """Pearson correlation coefficient of two equally long contours.

    Raises:
        MetricError: length mismatch, fewer than two points, or a constant
            contour (the correlation is undefined).
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise MetricError(f"contour lengths differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise MetricError(f"correlation needs at least 2 points, got {a.shape[0]}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.dot(da, da) * np.dot(db, db))
    if denom == 0.0:
        raise MetricError("correlation undefined: at least one contour is constant")
    return float(np.dot(da, db) / denom)


def f0_contour(audio: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame (f0_hz, voiced) of the 0.10-threshold track."""
    track = extract_pitch_energy(audio)
    i = PCC_THRESHOLD_INDEX
    return track.f0_hz[i], ~track.unvoiced[i]


def jointly_voiced_pcc(
    f0_a: np.ndarray,
    voiced_a: np.ndarray,
    f0_b: np.ndarray,
    voiced_b: np.ndarray,
) -> tuple[float, int]:
    """PCC over frames voiced in both contours; returns (pcc, joint count)."""
    f0_a = np.asarray(f0_a, dtype=np.float64).reshape(-1)
    f0_b = np.asarray(f0_b, dtype=np.float64).reshape(-1)
    if f0_a.shape != f0_b.shape:
        raise MetricError(f"contour lengths differ: {f0_a.shape[0]} vs {f0_b.shape[0]}")
    joint = np.asarray(voiced_a, dtype=bool) & np.asarray(voiced_b, dtype=bool)
    count = int(joint.sum())
    if count < 2:
        raise MetricError(
            f"correlation undefined: only {count} jointly voiced frame(s), need at least 2"
        )
    return f0_pcc(f0_a[joint], f0_b[joint]), count
