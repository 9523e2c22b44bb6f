"""Deterministic single-precision kernels for causal 1-D convolution graphs.

Feature maps are plain ``np.ndarray`` objects of shape ``(channels, frames)``,
float32, C-contiguous (all frames of channel 0, then channel 1, ...).  These
kernels are the single source of arithmetic for both the offline and the
streaming executors.

Determinism contract
--------------------
Every kernel is a pure function: identical inputs produce bit-identical
outputs.  The reduction over input channels and kernel taps is delegated to a
single GEMM per output-frame block, so the floating-point accumulation order
is a fixed function of the layer shape *and of the block width*.  Executors
that need bit-exact agreement (offline vs. streaming) therefore issue their
GEMMs with identical block widths; ``block_frames`` exposes that knob.
Elementwise ops (activations, bias add, modulation) are position-independent
and need no such care.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

__all__ = [
    "ConvSpec",
    "conv1d_causal",
    "conv1d_transposed_causal",
    "affine",
    "elu",
    "tanh",
    "softmax",
]


@dataclass(frozen=True)
class ConvSpec:
    """Static description of one convolution layer.

    For a non-transposed layer the implied left context (causal padding) is
    ``(kernel_size - 1) * dilation`` input frames and there is never any right
    padding.  Transposed layers upsample by ``stride`` and require
    ``stride <= kernel_size`` so that every output sample is written.
    """

    in_channels: int
    out_channels: int
    kernel_size: int
    stride: int = 1
    dilation: int = 1
    transposed: bool = False

    def __post_init__(self) -> None:
        for field in ("in_channels", "out_channels", "kernel_size", "stride", "dilation"):
            if getattr(self, field) < 1:
                raise ShapeError(f"ConvSpec.{field} must be positive, got {getattr(self, field)}")
        if self.transposed:
            if self.stride > self.kernel_size:
                raise ShapeError(
                    f"transposed conv requires stride <= kernel_size, "
                    f"got stride={self.stride} kernel_size={self.kernel_size}"
                )
            if self.dilation != 1:
                raise ShapeError("transposed conv supports dilation == 1 only")

    @property
    def causal_padding(self) -> int:
        """Implied frames of left context (zero for transposed layers)."""
        if self.transposed:
            return 0
        return (self.kernel_size - 1) * self.dilation

    @property
    def carry_frames(self) -> int:
        """Overlap-add carry length of a transposed layer, in output samples."""
        if not self.transposed:
            return 0
        return self.kernel_size - self.stride


def _as_feature_map(x: np.ndarray, channels: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise ShapeError(f"{what} must be 2-D (channels, frames), got ndim={x.ndim}")
    if x.shape[0] != channels:
        raise ShapeError(f"{what} has {x.shape[0]} channels, expected {channels}")
    return np.ascontiguousarray(x)


def _check_conv_params(w: np.ndarray, b: np.ndarray, spec: ConvSpec) -> tuple[np.ndarray, np.ndarray]:
    w = np.asarray(w, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    expected = (spec.out_channels, spec.in_channels, spec.kernel_size)
    if w.shape != expected:
        raise ShapeError(f"conv weight shape {w.shape} != (out, in, k) {expected}")
    if b.shape != (spec.out_channels,):
        raise ShapeError(f"conv bias shape {b.shape} != ({spec.out_channels},)")
    return w, b


def conv1d_causal(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    spec: ConvSpec,
    block_frames: int | None = None,
) -> np.ndarray:
    """Causal (left-padded) strided, dilated 1-D convolution.

    Args:
        x: input feature map ``(in_channels, frames)``.
        w: weights ``(out_channels, in_channels, kernel_size)``.
        b: bias ``(out_channels,)``.
        spec: layer description with ``transposed == False``.
        block_frames: output frames per GEMM call; ``None`` computes the whole
            output in one call.  Executors pin this to the streaming chunk
            width to make offline and streamed results bit-identical.

    Returns:
        Feature map ``(out_channels, ceil(frames / stride))``.  Output frame
        ``t`` depends only on input frames ``<= t * stride``.
    """
    if spec.transposed:
        raise ShapeError("conv1d_causal called with a transposed ConvSpec")
    x = _as_feature_map(x, spec.in_channels, "conv input")
    w, b = _check_conv_params(w, b, spec)
    w2 = np.ascontiguousarray(w.reshape(spec.out_channels, -1))
    return _conv_core(x, w2, b, spec, block_frames, left_context=None)


def _conv_core(
    x: np.ndarray,
    w2: np.ndarray,
    b: np.ndarray,
    spec: ConvSpec,
    block_frames: int | None,
    left_context: np.ndarray | None,
) -> np.ndarray:
    """Shared conv body; ``left_context`` replaces the implicit zero padding."""
    k, s, d = spec.kernel_size, spec.stride, spec.dilation
    pad = (k - 1) * d
    frames = x.shape[1]
    if left_context is None:
        xp = np.zeros((spec.in_channels, frames + pad), dtype=np.float32)
        xp[:, pad:] = x
    else:
        xp = np.concatenate([left_context, x], axis=1)
    out_frames = -(-frames // s)
    out = np.empty((spec.out_channels, out_frames), dtype=np.float32)
    taps = np.arange(k, dtype=np.intp) * d
    block = out_frames if block_frames is None else block_frames
    block = max(block, 1)
    for start in range(0, out_frames, block):
        stop = min(start + block, out_frames)
        starts = np.arange(start, stop, dtype=np.intp) * s
        cols = xp[:, starts[None, :] + taps[:, None]]  # (in, k, width) gather copy
        cols = cols.reshape(spec.in_channels * k, stop - start)
        out[:, start:stop] = w2 @ cols
    out += b[:, None]
    return out


def conv1d_transposed_causal(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    spec: ConvSpec,
    block_frames: int | None = None,
) -> np.ndarray:
    """Causal transposed 1-D convolution emitting ``stride`` samples per input frame.

    Only fully determined output samples are produced: the trailing
    ``kernel_size - stride`` partial sums (contributions of frames that have
    not arrived yet) are dropped, which is exactly the overlap-add carry kept
    by the streaming executor.

    Args:
        x: input feature map ``(in_channels, frames)``.
        w: weights ``(out_channels, in_channels, kernel_size)``.
        b: bias ``(out_channels,)``.
        spec: layer description with ``transposed == True``.
        block_frames: input frames per GEMM call (same role as in
            :func:`conv1d_causal`).

    Returns:
        Feature map ``(out_channels, frames * stride)``.  Output sample ``j``
        depends only on input frames in ``(floor((j - k) / stride), floor(j / stride)]``.
    """
    if not spec.transposed:
        raise ShapeError("conv1d_transposed_causal called with a non-transposed ConvSpec")
    x = _as_feature_map(x, spec.in_channels, "conv input")
    w, b = _check_conv_params(w, b, spec)
    w2 = np.ascontiguousarray(w.transpose(0, 2, 1).reshape(spec.out_channels * spec.kernel_size, spec.in_channels))
    out, _carry = _tconv_core(x, w2, b, spec, block_frames, carry=None)
    return out


def _tconv_core(
    x: np.ndarray,
    w2: np.ndarray,
    b: np.ndarray,
    spec: ConvSpec,
    block_frames: int | None,
    carry: np.ndarray | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Shared transposed-conv body.

    Returns ``(emitted, new_carry)`` where ``emitted`` has ``frames * stride``
    samples (bias applied) and ``new_carry`` holds the ``kernel_size - stride``
    trailing partial sums without bias.

    Accumulation into each output sample happens in ascending input-frame
    order.  For ``kernel_size <= 2 * stride`` every sample receives at most
    two contributions, so the vectorised two-pass add below is bit-identical
    to the frame loop (IEEE addition of two terms is commutative); wider
    kernels fall back to the explicit loop to preserve the order.
    """
    k, s = spec.kernel_size, spec.stride
    c_out = spec.out_channels
    frames = x.shape[1]
    emitted = frames * s
    buf = np.zeros((c_out, emitted + max(k - s, s)), dtype=np.float32)
    if carry is not None and carry.shape[1]:
        buf[:, : k - s] = carry
    block = frames if block_frames is None else block_frames
    block = max(block, 1)
    for start in range(0, frames, block):
        stop = min(start + block, frames)
        z = w2 @ x[:, start:stop]  # (out*k, width)
        z = z.reshape(c_out, k, stop - start)
        if k <= 2 * s:
            width = stop - start
            head = z[:, :s, :].transpose(0, 2, 1).reshape(c_out, width * s)
            buf[:, start * s : stop * s] += head
            if k > s:
                tail = np.zeros((c_out, width, s), dtype=np.float32)
                tail[:, :, : k - s] = z[:, s:, :].transpose(0, 2, 1)
                buf[:, start * s + s : stop * s + s] += tail.reshape(c_out, width * s)
        else:
            for j in range(start, stop):
                buf[:, j * s : j * s + k] += z[:, :, j - start]
    out = buf[:, :emitted] + b[:, None]
    new_carry = buf[:, emitted : emitted + (k - s)].copy()
    return out, new_carry


def affine(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``w @ x + b`` for a vector ``x`` (fixed accumulation order per shape)."""
    x = np.asarray(x, dtype=np.float32)
    w = np.asarray(w, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if x.ndim != 1:
        raise ShapeError(f"affine input must be 1-D, got ndim={x.ndim}")
    if w.ndim != 2 or w.shape[1] != x.shape[0]:
        raise ShapeError(f"affine weight shape {w.shape} incompatible with input dim {x.shape[0]}")
    if b.shape != (w.shape[0],):
        raise ShapeError(f"affine bias shape {b.shape} != ({w.shape[0]},)")
    return w @ x + b


def elu(x: np.ndarray) -> np.ndarray:
    """Exponential linear unit, ``alpha = 1``: ``x`` for ``x > 0`` else ``exp(x) - 1``."""
    x = np.asarray(x, dtype=np.float32)
    return np.maximum(x, 0) + np.expm1(np.minimum(x, 0))


def tanh(x: np.ndarray) -> np.ndarray:
    """Hyperbolic tangent (thin wrapper so all activations share a namespace)."""
    return np.tanh(np.asarray(x, dtype=np.float32))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction before exponentiation)."""
    x = np.asarray(x, dtype=np.float32)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)
