"""Causal computation graphs: plan description, weight binding, offline execution.

A :class:`GraphPlan` is an ordered list of nodes (convolutions, activations,
feature-wise modulation, residual units) together with the number of input
frames consumed per streaming trigger (``chunk_frames``).  Binding a plan to a
weight mapping yields a :class:`BoundGraph` that can execute the whole input
offline or hand per-layer state to the streaming executor.

The offline executor processes every convolution in GEMM blocks whose width
equals the frames that layer sees per streaming chunk.  This pins the
floating-point accumulation schedule, which is what makes streamed and
offline outputs bit-identical rather than merely close.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

import numpy as np

from .errors import GraphConfigError, MissingLayerError, ShapeError
from .kernels import ConvSpec, _conv_core, _tconv_core, affine, elu, tanh

__all__ = [
    "Conv",
    "ConvTranspose",
    "Elu",
    "Tanh",
    "Film",
    "Residual",
    "GraphPlan",
    "BoundGraph",
    "bind",
]


@dataclass(frozen=True)
class Conv:
    name: str
    spec: ConvSpec

    def __post_init__(self) -> None:
        if self.spec.transposed:
            raise GraphConfigError(f"node {self.name}: use ConvTranspose for transposed layers")


@dataclass(frozen=True)
class ConvTranspose:
    name: str
    spec: ConvSpec

    def __post_init__(self) -> None:
        if not self.spec.transposed:
            raise GraphConfigError(f"node {self.name}: ConvSpec must have transposed=True")


@dataclass(frozen=True)
class Elu:
    pass


@dataclass(frozen=True)
class Tanh:
    pass


@dataclass(frozen=True)
class Film:
    """Per-channel scale/shift computed from a conditioning vector by two affine maps."""

    name: str
    channels: int
    cond_dim: int


@dataclass(frozen=True)
class Residual:
    """Skip connection around a frame-rate-preserving body."""

    body: tuple["Node", ...]


Node = Union[Conv, ConvTranspose, Elu, Tanh, Film, Residual]


def _walk_shapes(nodes: tuple[Node, ...], channels: int, width: int, where: str) -> tuple[int, int]:
    """Validate channel chain and per-chunk frame widths; return final (channels, width)."""
    for i, node in enumerate(nodes):
        here = f"{where}[{i}]"
        if isinstance(node, Conv):
            spec = node.spec
            if spec.in_channels != channels:
                raise GraphConfigError(
                    f"{here} ({node.name}): expects {spec.in_channels} channels, gets {channels}"
                )
            if width % spec.stride:
                raise GraphConfigError(
                    f"{here} ({node.name}): chunk width {width} not divisible by stride {spec.stride}"
                )
            channels, width = spec.out_channels, width // spec.stride
        elif isinstance(node, ConvTranspose):
            spec = node.spec
            if spec.in_channels != channels:
                raise GraphConfigError(
                    f"{here} ({node.name}): expects {spec.in_channels} channels, gets {channels}"
                )
            channels, width = spec.out_channels, width * spec.stride
        elif isinstance(node, Film):
            if node.channels != channels:
                raise GraphConfigError(
                    f"{here} ({node.name}): modulates {node.channels} channels, gets {channels}"
                )
        elif isinstance(node, Residual):
            ch, w = _walk_shapes(node.body, channels, width, here + ".body")
            if ch != channels or w != width:
                raise GraphConfigError(
                    f"{here}: residual body maps ({channels} ch, {width} fr) to ({ch} ch, {w} fr); "
                    "skip connection requires identity shape"
                )
        elif not isinstance(node, (Elu, Tanh)):
            raise GraphConfigError(f"{here}: unknown node type {type(node).__name__}")
    return channels, width


@dataclass(frozen=True)
class GraphPlan:
    """Immutable layer list plus the input frames consumed per streaming trigger."""

    name: str
    nodes: tuple[Node, ...]
    in_channels: int
    chunk_frames: int

    def __post_init__(self) -> None:
        if self.chunk_frames < 1:
            raise GraphConfigError("chunk_frames must be positive")
        _walk_shapes(self.nodes, self.in_channels, self.chunk_frames, self.name)

    @property
    def out_channels(self) -> int:
        ch, _ = _walk_shapes(self.nodes, self.in_channels, self.chunk_frames, self.name)
        return ch

    @property
    def out_chunk_frames(self) -> int:
        _, w = _walk_shapes(self.nodes, self.in_channels, self.chunk_frames, self.name)
        return w

    def param_manifest(self) -> dict[str, tuple[int, ...]]:
        """Mapping of every parameter name to its required shape, in graph order."""
        manifest: dict[str, tuple[int, ...]] = {}
        _collect_params(self.nodes, manifest)
        return manifest

    def count_films(self) -> int:
        return _count_films(self.nodes)


def _collect_params(nodes: tuple[Node, ...], out: dict[str, tuple[int, ...]]) -> None:
    for node in nodes:
        if isinstance(node, (Conv, ConvTranspose)):
            s = node.spec
            out[f"{node.name}/weight"] = (s.out_channels, s.in_channels, s.kernel_size)
            out[f"{node.name}/bias"] = (s.out_channels,)
        elif isinstance(node, Film):
            out[f"{node.name}/scale_w"] = (node.channels, node.cond_dim)
            out[f"{node.name}/scale_b"] = (node.channels,)
            out[f"{node.name}/shift_w"] = (node.channels, node.cond_dim)
            out[f"{node.name}/shift_b"] = (node.channels,)
        elif isinstance(node, Residual):
            _collect_params(node.body, out)


def _count_films(nodes: tuple[Node, ...]) -> int:
    n = 0
    for node in nodes:
        if isinstance(node, Film):
            n += 1
        elif isinstance(node, Residual):
            n += _count_films(node.body)
    return n


class _BoundConv:
    __slots__ = ("node", "spec", "w2", "b", "chunk_in", "chunk_out")

    def __init__(self, node: Conv, w: np.ndarray, b: np.ndarray, chunk_in: int):
        self.node = node
        self.spec = node.spec
        self.w2 = np.ascontiguousarray(w.reshape(self.spec.out_channels, -1), dtype=np.float32)
        self.b = np.asarray(b, dtype=np.float32)
        self.chunk_in = chunk_in
        self.chunk_out = chunk_in // self.spec.stride

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        return _conv_core(x, self.w2, self.b, self.spec, self.chunk_out, left_context=None)


class _BoundTConv:
    __slots__ = ("node", "spec", "w2", "b", "chunk_in", "chunk_out")

    def __init__(self, node: ConvTranspose, w: np.ndarray, b: np.ndarray, chunk_in: int):
        self.node = node
        self.spec = node.spec
        k = self.spec.kernel_size
        self.w2 = np.ascontiguousarray(
            w.transpose(0, 2, 1).reshape(self.spec.out_channels * k, self.spec.in_channels),
            dtype=np.float32,
        )
        self.b = np.asarray(b, dtype=np.float32)
        self.chunk_in = chunk_in
        self.chunk_out = chunk_in * self.spec.stride

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        out, _ = _tconv_core(x, self.w2, self.b, self.spec, self.chunk_in, carry=None)
        return out


class _BoundElu:
    __slots__ = ()

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        return elu(x)


class _BoundTanh:
    __slots__ = ()

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        return tanh(x)


class _BoundFilm:
    __slots__ = ("node", "scale_w", "scale_b", "shift_w", "shift_b")

    def __init__(self, node: Film, params: dict[str, np.ndarray]):
        self.node = node
        self.scale_w = params["scale_w"]
        self.scale_b = params["scale_b"]
        self.shift_w = params["shift_w"]
        self.shift_b = params["shift_b"]

    def gamma_beta(self, cond: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        gamma = affine(cond, self.scale_w, self.scale_b)
        beta = affine(cond, self.shift_w, self.shift_b)
        return gamma, beta

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        if cond is None:
            raise ShapeError(f"film node {self.node.name} requires a conditioning vector")
        gamma, beta = self.gamma_beta(cond)
        return gamma[:, None] * x + beta[:, None]


class _BoundResidual:
    __slots__ = ("body",)

    def __init__(self, body: list):
        self.body = body

    def offline(self, x: np.ndarray, cond: np.ndarray | None) -> np.ndarray:
        y = x
        for layer in self.body:
            y = layer.offline(y, cond)
        return x + y


BoundNode = Union[_BoundConv, _BoundTConv, _BoundElu, _BoundTanh, _BoundFilm, _BoundResidual]


def _fetch(weights: Mapping[str, np.ndarray], name: str, shape: tuple[int, ...]) -> np.ndarray:
    try:
        value = weights[name]
    except KeyError:
        raise MissingLayerError(f"weights are missing layer '{name}'") from None
    value = np.asarray(value, dtype=np.float32)
    if value.shape != shape:
        raise MissingLayerError(f"layer '{name}' has shape {value.shape}, expected {shape}")
    return value


def _bind_nodes(
    nodes: tuple[Node, ...], weights: Mapping[str, np.ndarray], width: int
) -> tuple[list[BoundNode], int]:
    bound: list[BoundNode] = []
    for node in nodes:
        if isinstance(node, Conv):
            w = _fetch(weights, f"{node.name}/weight", (node.spec.out_channels, node.spec.in_channels, node.spec.kernel_size))
            b = _fetch(weights, f"{node.name}/bias", (node.spec.out_channels,))
            layer = _BoundConv(node, w, b, width)
            width = layer.chunk_out
            bound.append(layer)
        elif isinstance(node, ConvTranspose):
            w = _fetch(weights, f"{node.name}/weight", (node.spec.out_channels, node.spec.in_channels, node.spec.kernel_size))
            b = _fetch(weights, f"{node.name}/bias", (node.spec.out_channels,))
            layer = _BoundTConv(node, w, b, width)
            width = layer.chunk_out
            bound.append(layer)
        elif isinstance(node, Elu):
            bound.append(_BoundElu())
        elif isinstance(node, Tanh):
            bound.append(_BoundTanh())
        elif isinstance(node, Film):
            params = {
                key: _fetch(weights, f"{node.name}/{key}", shape)
                for key, shape in (
                    ("scale_w", (node.channels, node.cond_dim)),
                    ("scale_b", (node.channels,)),
                    ("shift_w", (node.channels, node.cond_dim)),
                    ("shift_b", (node.channels,)),
                )
            }
            bound.append(_BoundFilm(node, params))
        elif isinstance(node, Residual):
            body, width = _bind_nodes(node.body, weights, width)
            bound.append(_BoundResidual(body))
    return bound, width


@dataclass
class BoundGraph:
    """A plan joined with its weights; executable offline, stream-state factory."""

    plan: GraphPlan
    layers: list = field(repr=False)

    def execute(self, x: np.ndarray, cond: np.ndarray | None = None) -> np.ndarray:
        """Run the whole input at once (convolutions blocked at chunk width).

        ``x`` is ``(in_channels, frames)`` with ``frames`` a whole number of
        chunks; the result is bit-identical to streaming the same frames chunk
        by chunk and concatenating the emissions.
        """
        x = np.ascontiguousarray(np.asarray(x, dtype=np.float32))
        if x.ndim != 2 or x.shape[0] != self.plan.in_channels:
            raise ShapeError(
                f"graph '{self.plan.name}' input must be ({self.plan.in_channels}, frames), got {x.shape}"
            )
        if x.shape[1] % self.plan.chunk_frames:
            raise ShapeError(
                f"graph '{self.plan.name}' input frames {x.shape[1]} not a multiple of "
                f"chunk_frames {self.plan.chunk_frames}"
            )
        y = x
        for layer in self.layers:
            y = layer.offline(y, cond)
        return y


def bind(plan: GraphPlan, weights: Mapping[str, np.ndarray]) -> BoundGraph:
    """Join a plan with weight values, validating presence and shapes."""
    layers, _ = _bind_nodes(plan.nodes, weights, plan.chunk_frames)
    return BoundGraph(plan=plan, layers=layers)
