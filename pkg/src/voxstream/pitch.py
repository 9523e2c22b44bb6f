"""Yin pitch estimation, f0 whitening and frame energy side-features.

Every 20 ms frame (320 samples at 16 kHz) is analysed over a three-frame
window (previous, current, next; missing neighbours zero-padded).  The
difference function is evaluated over lags covering 50-500 Hz with a fixed
640-sample integration window via FFT autocorrelation; its cumulative-mean
normalisation is shared by the three voicing thresholds (0.05, 0.10, 0.15).
Per threshold the outputs are the f0 estimate, the normalised-difference
value at the estimated period, and the unvoiced predicate — nine values per
frame, plus the population variance of the frame as energy.

Voiced f0 values are whitened (zero mean, unit deviation over voiced frames)
before reaching the decoder so the side channel carries the pitch *contour*
but not the pitch register.  Offline processing uses utterance statistics;
streaming uses cumulative running statistics updated on voiced frames only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SAMPLE_RATE",
    "FRAME_SAMPLES",
    "WINDOW_SAMPLES",
    "THRESHOLDS",
    "TAU_MIN",
    "TAU_MAX",
    "STD_FLOOR_HZ",
    "difference_function",
    "difference_function_direct",
    "cumulative_mean_normalized",
    "yin_analyze",
    "analyze_window",
    "frame_energy",
    "PitchTrack",
    "extract_pitch_energy",
    "WhitenStats",
    "whiten_utterance",
    "whiten_frozen",
    "RunningWhitener",
    "side_feature_map",
]

SAMPLE_RATE = 16000
FRAME_SAMPLES = 320
WINDOW_SAMPLES = 3 * FRAME_SAMPLES
F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
TAU_MIN = int(SAMPLE_RATE / F0_MAX_HZ)  # 32
TAU_MAX = int(SAMPLE_RATE / F0_MIN_HZ)  # 320
INTEGRATION_SAMPLES = WINDOW_SAMPLES - TAU_MAX  # 640: every lag sums the same count
THRESHOLDS = (0.05, 0.10, 0.15)
STD_FLOOR_HZ = 1e-3
SIDE_CHANNELS = 3 * len(THRESHOLDS) + 1

_FFT_SIZE = 1024  # >= WINDOW_SAMPLES, so lags up to TAU_MAX are wrap-free


def _check_window(window: np.ndarray) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64).reshape(-1)
    if window.shape[0] != WINDOW_SAMPLES:
        raise ValueError(f"analysis window must have {WINDOW_SAMPLES} samples, got {window.shape[0]}")
    return window


def difference_function(window: np.ndarray) -> np.ndarray:
    """Squared-difference function d(tau) for tau in [0, TAU_MAX], FFT path."""
    w = _check_window(window)
    sq = np.concatenate([[0.0], np.cumsum(w * w)])
    power_ref = sq[INTEGRATION_SAMPLES]
    lags = np.arange(TAU_MAX + 1)
    power_lag = sq[lags + INTEGRATION_SAMPLES] - sq[lags]
    spec_full = np.fft.rfft(w, _FFT_SIZE)
    spec_head = np.fft.rfft(w[:INTEGRATION_SAMPLES], _FFT_SIZE)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), _FFT_SIZE)[: TAU_MAX + 1]
    return power_ref + power_lag - 2.0 * corr


def difference_function_direct(window: np.ndarray) -> np.ndarray:
    """Reference O(W * TAU_MAX) evaluation of the same difference function."""
    w = _check_window(window)
    head = w[:INTEGRATION_SAMPLES]
    d = np.empty(TAU_MAX + 1)
    for tau in range(TAU_MAX + 1):
        delta = head - w[tau : tau + INTEGRATION_SAMPLES]
        d[tau] = np.dot(delta, delta)
    return d


def cumulative_mean_normalized(d: np.ndarray) -> np.ndarray:
    """Yin's d'(tau): d(tau) divided by its running mean; d'(0) = 1."""
    out = np.ones_like(d)
    cums = np.cumsum(d[1:])
    taus = np.arange(1, d.shape[0], dtype=np.float64)
    valid = cums > 0
    out[1:][valid] = d[1:][valid] * taus[valid] / cums[valid]
    return out


def _pick_period(dprime: np.ndarray, threshold: float) -> tuple[float, float, bool]:
    """Locate the period for one threshold; returns (period, cmnd_value, voiced).

    First lag where d' drops below the threshold, walked down to its local
    minimum, then refined by parabolic interpolation.  If no lag qualifies the
    frame is unvoiced and the global minimum lag is reported unrefined.
    """
    search = dprime[TAU_MIN : TAU_MAX + 1]
    below = search < threshold
    if not below.any():
        tau = TAU_MIN + int(np.argmin(search))
        return float(tau), float(dprime[tau]), False
    tau = TAU_MIN + int(np.argmax(below))
    while tau + 1 <= TAU_MAX and dprime[tau + 1] < dprime[tau]:
        tau += 1
    if tau + 1 > TAU_MAX or tau < 1:
        return float(tau), float(dprime[tau]), True
    y0, y1, y2 = dprime[tau - 1], dprime[tau], dprime[tau + 1]
    denom = y0 - 2.0 * y1 + y2
    delta = 0.0 if denom <= 0 else float(np.clip((y0 - y2) / (2.0 * denom), -0.5, 0.5))
    value = y1 - 0.25 * (y0 - y2) * delta
    return tau + delta, float(value), True


def analyze_window(window: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """All three thresholds on one window: (f0_hz, cmnd, unvoiced) arrays of length 3."""
    w = _check_window(window)
    d = difference_function(w)
    f0 = np.zeros(len(THRESHOLDS))
    cmnd = np.ones(len(THRESHOLDS))
    unvoiced = np.ones(len(THRESHOLDS), dtype=bool)
    if np.sum(d[1:]) <= 0:  # silent / constant window: no periodicity to report
        return f0, cmnd, unvoiced
    dprime = cumulative_mean_normalized(d)
    for i, threshold in enumerate(THRESHOLDS):
        period, value, voiced = _pick_period(dprime, threshold)
        f0[i] = SAMPLE_RATE / period
        cmnd[i] = value
        unvoiced[i] = not voiced
    return f0, cmnd, unvoiced


def yin_analyze(window: np.ndarray, threshold: float) -> tuple[float, float, int]:
    """Single-threshold Yin analysis of one 960-sample window.

    Returns:
        ``(f0_hz, cmnd_value, unvoiced_flag)``.  For unvoiced frames the f0 of
        the global CMND minimum is reported (0.0 for degenerate, silent
        windows); the flag is 1.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    w = _check_window(window)
    d = difference_function(w)
    if np.sum(d[1:]) <= 0:
        return 0.0, 1.0, 1
    dprime = cumulative_mean_normalized(d)
    period, value, voiced = _pick_period(dprime, threshold)
    return SAMPLE_RATE / period, value, 0 if voiced else 1


def frame_energy(frame: np.ndarray) -> float:
    """Population variance of one 320-sample frame."""
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if frame.shape[0] != FRAME_SAMPLES:
        raise ValueError(f"frame must have {FRAME_SAMPLES} samples, got {frame.shape[0]}")
    return float(np.var(frame))


@dataclass
class PitchTrack:
    """Raw per-frame Yin outputs (pre-whitening, f0 in Hz) plus energy."""

    f0_hz: np.ndarray  # (3, frames) float64
    cmnd: np.ndarray  # (3, frames) float64
    unvoiced: np.ndarray  # (3, frames) bool
    energy: np.ndarray  # (frames,) float64

    @property
    def frames(self) -> int:
        return self.f0_hz.shape[1]


def extract_pitch_energy(audio: np.ndarray) -> PitchTrack:
    """Analyse whole audio (a multiple of 320 samples) frame by frame.

    Frame ``t`` uses the window ``(s_{t-1}, s_t, s_{t+1})``; the missing
    neighbours of the first and last frames are zero-padded.
    """
    audio = np.asarray(audio, dtype=np.float64).reshape(-1)
    if audio.shape[0] == 0 or audio.shape[0] % FRAME_SAMPLES:
        raise ValueError(
            f"audio length {audio.shape[0]} must be a positive multiple of {FRAME_SAMPLES}"
        )
    frames = audio.shape[0] // FRAME_SAMPLES
    padded = np.concatenate([np.zeros(FRAME_SAMPLES), audio, np.zeros(FRAME_SAMPLES)])
    f0 = np.zeros((len(THRESHOLDS), frames))
    cmnd = np.zeros((len(THRESHOLDS), frames))
    unvoiced = np.zeros((len(THRESHOLDS), frames), dtype=bool)
    energy = np.zeros(frames)
    for t in range(frames):
        window = padded[t * FRAME_SAMPLES : t * FRAME_SAMPLES + WINDOW_SAMPLES]
        f0[:, t], cmnd[:, t], unvoiced[:, t] = analyze_window(window)
        energy[t] = frame_energy(audio[t * FRAME_SAMPLES : (t + 1) * FRAME_SAMPLES])
    return PitchTrack(f0_hz=f0, cmnd=cmnd, unvoiced=unvoiced, energy=energy)


@dataclass(frozen=True)
class WhitenStats:
    """Mean/deviation of voiced f0 values (population statistics, in Hz)."""

    mean: float
    std: float
    voiced_count: int


def _whiten_values(f0: np.ndarray, voiced: np.ndarray, mean: float, std: float) -> np.ndarray:
    return np.where(voiced, (f0 - mean) / max(std, STD_FLOOR_HZ), 0.0)


def whiten_utterance(f0_hz: np.ndarray, voiced: np.ndarray) -> tuple[np.ndarray, WhitenStats]:
    """Whiten with statistics over the whole utterance's voiced frames.

    Unvoiced frames map to 0 and are excluded from the statistics.  With no
    voiced frames everything is 0 and the stats are (0, 0).
    """
    f0_hz = np.asarray(f0_hz, dtype=np.float64).reshape(-1)
    voiced = np.asarray(voiced, dtype=bool).reshape(-1)
    if f0_hz.shape != voiced.shape:
        raise ValueError("f0 and voiced arrays must have equal length")
    count = int(voiced.sum())
    if count == 0:
        return np.zeros_like(f0_hz), WhitenStats(0.0, 0.0, 0)
    sel = f0_hz[voiced]
    mean = float(sel.mean())
    std = float(np.sqrt(np.mean((sel - mean) ** 2)))
    return _whiten_values(f0_hz, voiced, mean, std), WhitenStats(mean, std, count)


def whiten_frozen(f0_hz: np.ndarray, voiced: np.ndarray, stats: WhitenStats) -> np.ndarray:
    """Whiten with externally fixed statistics (test/equivalence mode)."""
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    voiced = np.asarray(voiced, dtype=bool)
    return _whiten_values(f0_hz, voiced, stats.mean, stats.std)


class RunningWhitener:
    """Cumulative mean/variance over voiced frames (one-pass, numerically stable).

    ``update`` whitens with the statistics *including* the new value, so the
    first voiced frame always maps to 0 (its deviation is still zero and the
    divide guard applies).  Unvoiced frames leave the state untouched.
    """

    def __init__(self) -> None:
        self._count = 0
        self._mean = 0.0
        self._m2 = 0.0

    def update(self, f0_hz: float, voiced: bool) -> float:
        if not voiced:
            return 0.0
        self._count += 1
        delta = f0_hz - self._mean
        self._mean += delta / self._count
        self._m2 += delta * (f0_hz - self._mean)
        std = float(np.sqrt(self._m2 / self._count))
        return float((f0_hz - self._mean) / max(std, STD_FLOOR_HZ))

    @property
    def stats(self) -> WhitenStats:
        std = float(np.sqrt(self._m2 / self._count)) if self._count else 0.0
        return WhitenStats(self._mean, std, self._count)


def side_feature_map(track: PitchTrack, whitened: np.ndarray) -> np.ndarray:
    """Stack whitened f0, CMND and voicing per threshold plus energy.

    Args:
        track: raw per-frame analysis results.
        whitened: ``(3, frames)`` whitened f0 values (0 on unvoiced frames).

    Returns:
        ``(10, frames)`` float32 feature map, rows ordered
        ``(wf0, cmnd, unvoiced) x thresholds ascending``, energy last.
    """
    whitened = np.asarray(whitened, dtype=np.float64)
    rows = []
    for i in range(len(THRESHOLDS)):
        rows.append(whitened[i])
        rows.append(track.cmnd[i])
        rows.append(track.unvoiced[i].astype(np.float64))
    rows.append(track.energy)
    return np.stack(rows).astype(np.float32)
