"""End-to-end conversion: enrollment, offline and streaming paths, latency.

The offline path runs the content encoder over the whole (zero-padded) source,
computes pitch/energy side-features with utterance-level whitening, and feeds
the channel-concatenated columns to the modulation-conditioned decoder.  The
streaming path consumes 320-sample chunks and differs from offline *only*
through the whitening statistics (running instead of utterance-level); with
both paths pinned to the same frozen statistics their outputs are
bit-identical, which is the runtime's central equivalence contract.

Latency is split into an architectural part — a pure function of the model's
lookahead structure: one frame of pitch window plus two frames of output
pairing, 60 ms at 20 ms frames — and a measured compute part per frame.
"""

from __future__ import annotations

import time
from contextlib import nullcontext
from dataclasses import dataclass

import numpy as np

from .config import ArchitectureConfig
from .errors import AudioFormatError
from .graph import BoundGraph, bind
from .model import POOL_QUERY, build_content_encoder, build_decoder, build_speaker_encoder, learnable_pool
from .pitch import (
    FRAME_SAMPLES,
    PitchTrack,
    RunningWhitener,
    THRESHOLDS,
    WhitenStats,
    analyze_window,
    extract_pitch_energy,
    frame_energy,
    side_feature_map,
    whiten_frozen,
    whiten_utterance,
)
from .streaming import ConversionSession
from .weights import ModelWeights

__all__ = [
    "FRAME_MS",
    "FROZEN_WHITENING",
    "ConversionResult",
    "LatencyBudget",
    "enroll_speaker",
    "convert_offline",
    "convert_streaming",
    "StreamConverter",
    "architectural_latency_ms",
    "latency_report",
]

FRAME_MS = 20.0

# Pass-through statistics used by the test-only frozen-whitening mode; both
# paths seeing identical stats is all the byte-equality contract needs.
FROZEN_WHITENING = WhitenStats(mean=0.0, std=1.0, voiced_count=0)


@dataclass
class ConversionResult:
    """Converted audio plus the bookkeeping the CLI reports."""

    audio: np.ndarray  # float32, padded length (original_samples rounded up)
    original_samples: int
    frames: int
    mode: str
    track: PitchTrack
    whiten_stats: tuple[WhitenStats, ...]
    step_times_ms: list[float] | None = None


def _checked_audio(audio: np.ndarray, what: str) -> np.ndarray:
    audio = np.asarray(audio, dtype=np.float32).reshape(-1)
    if audio.shape[0] == 0:
        raise AudioFormatError(f"{what} is empty")
    return audio


def _pad_to_frames(audio: np.ndarray) -> np.ndarray:
    remainder = audio.shape[0] % FRAME_SAMPLES
    if remainder == 0:
        return audio
    return np.concatenate([audio, np.zeros(FRAME_SAMPLES - remainder, dtype=np.float32)])


def _bind_runtime(weights: ModelWeights) -> tuple[BoundGraph, BoundGraph]:
    cfg = weights.config
    encoder = bind(build_content_encoder(cfg), weights)
    decoder = bind(build_decoder(cfg), weights)
    return encoder, decoder


def enroll_speaker(target_audio: np.ndarray, weights: ModelWeights) -> np.ndarray:
    """Utterance-level speaker embedding of the target audio.

    Runs the speaker encoder offline over the whole utterance and aggregates
    the per-frame embeddings with the learnable pooling query.  Deterministic;
    enrollment is the one non-causal stage and happens before streaming starts.
    """
    audio = _checked_audio(target_audio, "target audio")
    if audio.shape[0] < FRAME_SAMPLES:
        raise AudioFormatError(
            f"target audio too short: {audio.shape[0]} samples, need at least {FRAME_SAMPLES}"
        )
    audio = _pad_to_frames(audio)
    encoder = bind(build_speaker_encoder(weights.config), weights)
    embeddings = encoder.execute(audio[None, :])
    return learnable_pool(embeddings, weights[POOL_QUERY])


def _whiten_offline(
    track: PitchTrack, whitening: str | WhitenStats
) -> tuple[np.ndarray, tuple[WhitenStats, ...]]:
    whitened = np.zeros_like(track.f0_hz)
    stats: list[WhitenStats] = []
    for i in range(len(THRESHOLDS)):
        voiced = ~track.unvoiced[i]
        if isinstance(whitening, WhitenStats):
            whitened[i] = whiten_frozen(track.f0_hz[i], voiced, whitening)
            stats.append(whitening)
        elif whitening == "utterance":
            whitened[i], st = whiten_utterance(track.f0_hz[i], voiced)
            stats.append(st)
        else:
            raise ValueError(f"offline whitening must be 'utterance' or WhitenStats, got {whitening!r}")
    return whitened, tuple(stats)


def convert_offline(
    source: np.ndarray,
    speaker_latent: np.ndarray,
    weights: ModelWeights,
    whitening: str | WhitenStats = "utterance",
) -> ConversionResult:
    """Whole-utterance conversion; output length equals the padded input length."""
    audio = _pad_to_frames(_checked_audio(source, "source audio"))
    original = int(np.asarray(source).reshape(-1).shape[0])
    encoder, decoder = _bind_runtime(weights)
    latents = encoder.execute(audio[None, :])
    track = extract_pitch_energy(audio)
    whitened, stats = _whiten_offline(track, whitening)
    columns = np.concatenate([latents, side_feature_map(track, whitened)], axis=0)
    out = decoder.execute(columns, cond=np.asarray(speaker_latent, dtype=np.float32))
    return ConversionResult(
        audio=out.reshape(-1),
        original_samples=original,
        frames=track.frames,
        mode="offline",
        track=track,
        whiten_stats=stats,
    )


class StreamConverter:
    """Stateful chunk-by-chunk conversion driver.

    Owns the three-frame pitch ring buffer and the per-threshold whitening
    state, computes the side column for frame ``t - 1`` as chunk ``t``
    arrives, and drives the underlying :class:`ConversionSession`.
    """

    def __init__(
        self,
        weights: ModelWeights,
        speaker_latent: np.ndarray,
        whitening: str | WhitenStats = "running",
    ):
        encoder, decoder = _bind_runtime(weights)
        self.session = ConversionSession(encoder, decoder, speaker_latent)
        if isinstance(whitening, WhitenStats):
            self._frozen: WhitenStats | None = whitening
            self._whiteners: list[RunningWhitener] | None = None
        elif whitening == "running":
            self._frozen = None
            self._whiteners = [RunningWhitener() for _ in THRESHOLDS]
        else:
            raise ValueError(f"streaming whitening must be 'running' or WhitenStats, got {whitening!r}")
        self._window = np.zeros(3 * FRAME_SAMPLES, dtype=np.float32)
        self._log: list[tuple[np.ndarray, np.ndarray, np.ndarray, float]] = []

    @property
    def first_emission_step(self) -> int:
        return self.session.first_emission_step

    @property
    def steps_consumed(self) -> int:
        return self.session.steps_consumed

    def _side_column(self) -> np.ndarray:
        """Side features of the middle frame of the current analysis window."""
        f0, cmnd, unvoiced = analyze_window(self._window)
        energy = frame_energy(self._window[FRAME_SAMPLES : 2 * FRAME_SAMPLES])
        voiced = ~unvoiced
        if self._frozen is not None:
            whitened = whiten_frozen(f0, voiced, self._frozen)
        else:
            assert self._whiteners is not None
            whitened = np.array(
                [w.update(float(f0[i]), bool(voiced[i])) for i, w in enumerate(self._whiteners)]
            )
        self._log.append((f0, cmnd, unvoiced, energy))
        frame = PitchTrack(
            f0_hz=f0[:, None], cmnd=cmnd[:, None], unvoiced=unvoiced[:, None], energy=np.array([energy])
        )
        return side_feature_map(frame, whitened[:, None])

    def step(self, chunk: np.ndarray) -> np.ndarray | None:
        """Consume one 320-sample chunk; emit one chunk after the warmup."""
        chunk = np.asarray(chunk, dtype=np.float32).reshape(-1)
        if chunk.shape[0] != FRAME_SAMPLES:
            raise ValueError(f"chunk must have exactly {FRAME_SAMPLES} samples, got {chunk.shape[0]}")
        self._window = np.concatenate([self._window[FRAME_SAMPLES:], chunk])
        side = self._side_column() if self.session.steps_consumed > 0 else None
        return self.session.step(chunk, side)

    def flush(self) -> list[np.ndarray]:
        """Complete the final frame (zero right-neighbour) and drain the lookahead."""
        if self.session.steps_consumed == 0:
            return self.session.flush(None)
        self._window = np.concatenate([self._window[FRAME_SAMPLES:], np.zeros(FRAME_SAMPLES, dtype=np.float32)])
        return self.session.flush(self._side_column())

    @property
    def track(self) -> PitchTrack:
        """Raw pitch analysis of every completed frame so far."""
        if not self._log:
            empty = np.zeros((len(THRESHOLDS), 0))
            return PitchTrack(empty, empty.copy(), empty.astype(bool), np.zeros(0))
        f0 = np.stack([entry[0] for entry in self._log], axis=1)
        cmnd = np.stack([entry[1] for entry in self._log], axis=1)
        unvoiced = np.stack([entry[2] for entry in self._log], axis=1)
        energy = np.array([entry[3] for entry in self._log])
        return PitchTrack(f0_hz=f0, cmnd=cmnd, unvoiced=unvoiced, energy=energy)

    @property
    def whiten_stats(self) -> tuple[WhitenStats, ...]:
        if self._frozen is not None:
            return tuple(self._frozen for _ in THRESHOLDS)
        assert self._whiteners is not None
        return tuple(w.stats for w in self._whiteners)


def convert_streaming(
    source: np.ndarray,
    speaker_latent: np.ndarray,
    weights: ModelWeights,
    whitening: str | WhitenStats = "running",
    collect_times: bool = False,
) -> ConversionResult:
    """Run the streaming path over a whole buffer (pads, steps, flushes)."""
    audio = _pad_to_frames(_checked_audio(source, "source audio"))
    original = int(np.asarray(source).reshape(-1).shape[0])
    converter = StreamConverter(weights, speaker_latent, whitening)
    pieces: list[np.ndarray] = []
    times: list[float] | None = [] if collect_times else None
    for start in range(0, audio.shape[0], FRAME_SAMPLES):
        chunk = audio[start : start + FRAME_SAMPLES]
        t0 = time.perf_counter()
        out = converter.step(chunk)
        if times is not None:
            times.append((time.perf_counter() - t0) * 1e3)
        if out is not None:
            pieces.append(out)
    pieces.extend(converter.flush())
    out_audio = np.concatenate(pieces) if pieces else np.zeros(0, dtype=np.float32)
    return ConversionResult(
        audio=out_audio,
        original_samples=original,
        frames=converter.track.frames,
        mode="streaming",
        track=converter.track,
        whiten_stats=converter.whiten_stats,
        step_times_ms=times,
    )


def architectural_latency_ms(lookahead_frames: int, frame_ms: float = FRAME_MS) -> float:
    """Latency imposed by structure alone: lookahead span times frame duration."""
    return lookahead_frames * frame_ms


@dataclass(frozen=True)
class LatencyBudget:
    """Structural and measured latency of the streaming pipeline."""

    frame_ms: float
    f0_window_lookahead_frames: int
    output_pairing_lookahead_frames: int
    architectural_ms: float
    compute_ms_mean: float
    compute_ms_median: float
    compute_ms_max: float
    end_to_end_ms: float
    real_time_factor: float
    steps_measured: int

    def as_dict(self) -> dict[str, float | int]:
        return {
            "frame_ms": self.frame_ms,
            "f0_lookahead_frames": self.f0_window_lookahead_frames,
            "pairing_lookahead_frames": self.output_pairing_lookahead_frames,
            "arch_latency_ms": self.architectural_ms,
            "compute_ms_mean": self.compute_ms_mean,
            "compute_ms_median": self.compute_ms_median,
            "compute_ms_max": self.compute_ms_max,
            "end_to_end_ms": self.end_to_end_ms,
            "rtf": self.real_time_factor,
            "steps": self.steps_measured,
        }


def _synthetic_speech(seconds: float, seed: int = 0) -> np.ndarray:
    """Voiced-ish test signal: two harmonics with vibrato plus noise floor."""
    rng = np.random.default_rng(seed)
    n = int(seconds * 16000)
    t = np.arange(n) / 16000.0
    f0 = 140.0 + 15.0 * np.sin(2 * np.pi * 0.7 * t)
    phase = 2 * np.pi * np.cumsum(f0) / 16000.0
    signal = 0.5 * np.sin(phase) + 0.25 * np.sin(2 * phase) + 0.02 * rng.standard_normal(n)
    return np.clip(signal, -1.0, 1.0).astype(np.float32)


def latency_report(
    weights: ModelWeights,
    seconds: float = 5.0,
    warmup_seconds: float = 1.0,
    single_thread: bool = True,
) -> LatencyBudget:
    """Measure per-frame compute over synthetic audio and combine with structure.

    The architectural part is exact and hardware-independent; compute is the
    mean wall-clock of one streaming step, taken after a warm-up period,
    restricted to a single BLAS thread when ``single_thread`` is set (so the
    figure reflects one core).
    """
    try:
        from threadpoolctl import threadpool_limits

        limits = threadpool_limits(limits=1) if single_thread else nullcontext()
    except ImportError:  # pragma: no cover - declared dependency
        limits = nullcontext()
    cfg = weights.config
    rng = np.random.default_rng(1)
    latent = rng.standard_normal(cfg.embedding_dim).astype(np.float32)
    warmup_audio = _synthetic_speech(max(warmup_seconds, FRAME_MS / 1000.0), seed=1)
    audio = _synthetic_speech(max(seconds, FRAME_MS / 1000.0), seed=2)
    times: list[float] = []
    with limits:
        converter = StreamConverter(weights, latent, whitening="running")
        warmup_padded = _pad_to_frames(warmup_audio)
        for start in range(0, warmup_padded.shape[0], FRAME_SAMPLES):
            converter.step(warmup_padded[start : start + FRAME_SAMPLES])
        padded = _pad_to_frames(audio)
        for start in range(0, padded.shape[0], FRAME_SAMPLES):
            chunk = padded[start : start + FRAME_SAMPLES]
            t0 = time.perf_counter()
            converter.step(chunk)
            times.append((time.perf_counter() - t0) * 1e3)
    arr = np.array(times)
    session = converter.session
    arch = architectural_latency_ms(session.lookahead_frames)
    mean = float(arr.mean())
    return LatencyBudget(
        frame_ms=FRAME_MS,
        f0_window_lookahead_frames=session.F0_WINDOW_LOOKAHEAD_FRAMES,
        output_pairing_lookahead_frames=session.OUTPUT_PAIRING_FRAMES,
        architectural_ms=arch,
        compute_ms_mean=mean,
        compute_ms_median=float(np.median(arr)),
        compute_ms_max=float(arr.max()),
        end_to_end_ms=arch + mean,
        real_time_factor=mean / FRAME_MS,
        steps_measured=len(times),
    )
