"""Stateful frame-by-frame execution of causal graphs.

:class:`StreamingGraph` runs any :class:`~voxstream.graph.BoundGraph` chunk by
chunk.  Each convolution keeps a ring buffer of ``(kernel_size - 1) * dilation``
input frames (zero after reset, matching offline left zero-padding) and each
transposed convolution keeps an overlap-add carry of ``kernel_size - stride``
samples.  Concatenated chunk outputs are bit-identical to offline execution of
the same frames.

:class:`ConversionSession` composes a content-encoder graph and a decoder
graph into the voice-conversion source path.  Per 20 ms step it consumes one
audio chunk plus the pitch/energy side column for the previous frame, and
after a three-step warmup (one frame of pitch-window lookahead plus the
two-frame output pairing) it emits exactly one converted chunk per step.
Flushing drains the lookahead so stream length equals input length.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ShapeError, StreamStateError
from .graph import (
    BoundGraph,
    _BoundConv,
    _BoundElu,
    _BoundFilm,
    _BoundResidual,
    _BoundTanh,
    _BoundTConv,
)
from .kernels import _conv_core, _tconv_core, elu, tanh

__all__ = ["StreamingGraph", "ConversionSession"]


class _ConvState:
    __slots__ = ("bound", "ctx")

    def __init__(self, bound: _BoundConv):
        self.bound = bound
        self.reset()

    def reset(self) -> None:
        spec = self.bound.spec
        self.ctx = np.zeros((spec.in_channels, spec.causal_padding), dtype=np.float32)

    def push(self, x: np.ndarray) -> np.ndarray:
        b = self.bound
        out = _conv_core(x, b.w2, b.b, b.spec, b.chunk_out, left_context=self.ctx)
        pad = b.spec.causal_padding
        if pad:
            m = x.shape[1]
            if m >= pad:
                self.ctx = x[:, m - pad :].copy()
            else:
                self.ctx = np.concatenate([self.ctx[:, m:], x], axis=1)
        return out

    def capacity(self) -> int:
        return self.ctx.size


class _TConvState:
    __slots__ = ("bound", "carry")

    def __init__(self, bound: _BoundTConv):
        self.bound = bound
        self.reset()

    def reset(self) -> None:
        spec = self.bound.spec
        self.carry = np.zeros((spec.out_channels, spec.carry_frames), dtype=np.float32)

    def push(self, x: np.ndarray) -> np.ndarray:
        b = self.bound
        out, self.carry = _tconv_core(x, b.w2, b.b, b.spec, b.chunk_in, carry=self.carry)
        return out

    def capacity(self) -> int:
        return self.carry.size


class _EluState:
    __slots__ = ()

    def reset(self) -> None:
        pass

    def push(self, x: np.ndarray) -> np.ndarray:
        return elu(x)

    def capacity(self) -> int:
        return 0


class _TanhState:
    __slots__ = ()

    def reset(self) -> None:
        pass

    def push(self, x: np.ndarray) -> np.ndarray:
        return tanh(x)

    def capacity(self) -> int:
        return 0


class _FilmState:
    __slots__ = ("gamma", "beta")

    def __init__(self, bound: _BoundFilm, cond: np.ndarray):
        gamma, beta = bound.gamma_beta(cond)
        self.gamma = gamma[:, None]
        self.beta = beta[:, None]

    def reset(self) -> None:
        pass  # gamma/beta are constants of the stream

    def push(self, x: np.ndarray) -> np.ndarray:
        return self.gamma * x + self.beta

    def capacity(self) -> int:
        return 0


class _ResidualState:
    __slots__ = ("body",)

    def __init__(self, body: list):
        self.body = body

    def reset(self) -> None:
        for state in self.body:
            state.reset()

    def push(self, x: np.ndarray) -> np.ndarray:
        y = x
        for state in self.body:
            y = state.push(y)
        return x + y

    def capacity(self) -> int:
        return sum(state.capacity() for state in self.body)


def _build_states(layers: list, cond: np.ndarray | None) -> list:
    states: list = []
    for layer in layers:
        if isinstance(layer, _BoundConv):
            states.append(_ConvState(layer))
        elif isinstance(layer, _BoundTConv):
            states.append(_TConvState(layer))
        elif isinstance(layer, _BoundElu):
            states.append(_EluState())
        elif isinstance(layer, _BoundTanh):
            states.append(_TanhState())
        elif isinstance(layer, _BoundFilm):
            if cond is None:
                raise ShapeError(f"film node {layer.node.name} requires a conditioning vector")
            states.append(_FilmState(layer, cond))
        elif isinstance(layer, _BoundResidual):
            states.append(_ResidualState(_build_states(layer.body, cond)))
        else:  # pragma: no cover - defensive
            raise TypeError(f"unknown bound layer {type(layer).__name__}")
    return states


class StreamingGraph:
    """Per-stream state over shared immutable weights.

    Confined to one execution context at a time; independent instances over
    the same :class:`BoundGraph` never interact.
    """

    def __init__(self, bound: BoundGraph, cond: np.ndarray | None = None):
        self.bound = bound
        self.plan = bound.plan
        self._states = _build_states(bound.layers, cond)
        self.frames_consumed = 0
        self.frames_emitted = 0

    def push(self, x: np.ndarray) -> np.ndarray:
        """Consume a whole number of chunks, return the corresponding output frames."""
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
        if x.ndim != 2 or x.shape[0] != self.plan.in_channels:
            raise ShapeError(
                f"stream input must be ({self.plan.in_channels}, frames), got {x.shape}"
            )
        if x.shape[1] % self.plan.chunk_frames:
            raise ShapeError(
                f"stream input frames {x.shape[1]} not a multiple of chunk_frames "
                f"{self.plan.chunk_frames}"
            )
        y = x
        for state in self._states:
            y = state.push(y)
        self.frames_consumed += x.shape[1]
        self.frames_emitted += y.shape[1]
        return y

    def reset(self) -> None:
        for state in self._states:
            state.reset()
        self.frames_consumed = 0
        self.frames_emitted = 0

    def buffer_capacities(self) -> list[int]:
        """Per-layer state sizes in values; fixed at construction."""
        return [state.capacity() for state in self._states]


class ConversionSession:
    """Stateful voice-conversion source path with explicit lookahead accounting.

    Step ``t`` consumes source chunk ``s_t`` and the side column of frame
    ``t - 1`` (whose pitch window ends at ``s_t``); the decoder advances one
    frame per completed column and emissions run three steps behind the input:
    one step because of the pitch window, two more to honour the output/input
    frame pairing the model is trained with.
    """

    F0_WINDOW_LOOKAHEAD_FRAMES = 1
    OUTPUT_PAIRING_FRAMES = 2

    def __init__(self, encoder: BoundGraph, decoder: BoundGraph, speaker_latent: np.ndarray):
        latent = np.asarray(speaker_latent, dtype=np.float32)
        self.chunk_samples = encoder.plan.chunk_frames
        self.side_channels = decoder.plan.in_channels - encoder.plan.out_channels
        if self.side_channels < 0:
            raise ShapeError(
                f"decoder expects {decoder.plan.in_channels} channels but encoder emits "
                f"{encoder.plan.out_channels}"
            )
        self._enc = StreamingGraph(encoder)
        self._dec = StreamingGraph(decoder, cond=latent)
        self._latents: deque[np.ndarray] = deque()
        self._pending: deque[np.ndarray] = deque()
        self.steps_consumed = 0
        self.chunks_emitted = 0
        self._terminated = False

    @property
    def lookahead_frames(self) -> int:
        return self.F0_WINDOW_LOOKAHEAD_FRAMES + self.OUTPUT_PAIRING_FRAMES

    @property
    def first_emission_step(self) -> int:
        """0-based step index of the first emitted chunk."""
        return self.lookahead_frames

    @property
    def terminated(self) -> bool:
        return self._terminated

    def _advance_decoder(self, side: np.ndarray) -> None:
        side = np.asarray(side, dtype=np.float32).reshape(-1)
        if side.shape != (self.side_channels,):
            raise ValueError(
                f"side column must have {self.side_channels} values, got {side.shape}"
            )
        latent = self._latents.popleft()
        column = np.concatenate([latent, side[:, None]], axis=0)
        self._pending.append(self._dec.push(column))

    def step(self, chunk: np.ndarray, side: np.ndarray | None) -> np.ndarray | None:
        """Consume one chunk; return one emitted chunk once past the warmup.

        Args:
            chunk: the next ``chunk_samples`` audio samples.
            side: side column for the previous source frame; ``None`` only on
                step 0, when no frame has a complete pitch window yet.

        Returns:
            A converted chunk of ``chunk_samples`` samples, or ``None`` during
            the first ``lookahead_frames`` steps.
        """
        if self._terminated:
            raise StreamStateError("step() called on a flushed session")
        chunk = np.asarray(chunk, dtype=np.float32).reshape(-1)
        if chunk.shape[0] != self.chunk_samples:
            raise ValueError(
                f"chunk must have exactly {self.chunk_samples} samples, got {chunk.shape[0]}"
            )
        t = self.steps_consumed
        if (side is None) != (t == 0):
            raise ValueError("side column must be omitted on step 0 and supplied afterwards")
        self._latents.append(self._enc.push(chunk[None, :]))
        if side is not None:
            self._advance_decoder(side)
        self.steps_consumed = t + 1
        if t >= self.first_emission_step:
            self.chunks_emitted += 1
            return self._pending.popleft().reshape(-1)
        return None

    def flush(self, final_side: np.ndarray | None = None) -> list[np.ndarray]:
        """Complete the last side column and drain the lookahead.

        After flushing, the total number of emitted chunks equals the number
        of consumed chunks and the session refuses further use.
        """
        if self._terminated:
            raise StreamStateError("flush() called on a terminated session")
        self._terminated = True
        if self.steps_consumed == 0:
            if final_side is not None:
                raise ValueError("no chunks were consumed; there is no final side column")
            return []
        if final_side is None:
            raise ValueError("flush() needs the side column of the last consumed frame")
        self._advance_decoder(final_side)
        drained = [c.reshape(-1) for c in self._pending]
        self._pending.clear()
        self.chunks_emitted += len(drained)
        return drained
