"""WAV I/O restricted to the runtime's contract: RIFF PCM16, mono, 16 kHz.

Samples map to float32 in [-1, 1] by division by 32768; writing multiplies
back, rounds to nearest and clamps, so conforming payloads round-trip
bit-exactly.  Anything else (other rates, channel counts, encodings) is
rejected with a descriptive error instead of being silently resampled.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np

from .errors import AudioFormatError

__all__ = ["SAMPLE_RATE", "read_wav", "write_wav"]

SAMPLE_RATE = 16000
_SCALE = 32768.0


def read_wav(path: str | Path) -> np.ndarray:
    """Read a conforming WAV file into float32 samples in [-1, 1]."""
    try:
        with wave.open(str(path), "rb") as fh:
            channels = fh.getnchannels()
            rate = fh.getframerate()
            width = fh.getsampwidth()
            comp = fh.getcomptype()
            payload = fh.readframes(fh.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError(f"{path}: not a readable WAV file: {exc}") from None
    if comp != "NONE":
        raise AudioFormatError(f"{path}: compressed WAV ({comp}) not supported, need plain PCM")
    if channels != 1:
        raise AudioFormatError(f"{path}: {channels} channels, this pipeline requires mono")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, this pipeline requires {SAMPLE_RATE} Hz")
    if width != 2:
        raise AudioFormatError(f"{path}: {8 * width}-bit samples, this pipeline requires 16-bit PCM")
    data = np.frombuffer(payload, dtype="<i2")
    return (data.astype(np.float32)) / np.float32(_SCALE)


def write_wav(path: str | Path, samples: np.ndarray) -> None:
    """Write float32 samples as 16 kHz mono PCM16, clamping to [-1, 1]."""
    samples = np.asarray(samples, dtype=np.float32).reshape(-1)
    quantized = np.clip(np.rint(samples.astype(np.float64) * _SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(SAMPLE_RATE)
        fh.writeframes(quantized.tobytes())
