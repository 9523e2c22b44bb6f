"""Network plans at configured scales, pooling/projection heads, weight init.

Both encoders share one convolutional topology: an input convolution, four
blocks of three dilated residual units followed by a channel-doubling strided
convolution (strides 2, 4, 5, 8), and a final projection to the embedding
dimension, emitting one 64-dim latent per 320 input samples.  The decoder
mirrors it with transposed convolutions (strides 8, 5, 4, 2) and carries
feature-wise modulation between the residual units of every block so the
speaker embedding conditions synthesis.  Encoders contain no modulation
nodes.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .config import ArchitectureConfig
from .errors import ShapeError
from .graph import Conv, ConvTranspose, Elu, Film, GraphPlan, Residual, Tanh
from .kernels import ConvSpec, affine, softmax
from .weights import ModelWeights

__all__ = [
    "build_content_encoder",
    "build_speaker_encoder",
    "build_decoder",
    "learnable_pool",
    "predict_pseudo_labels",
    "layer_norm",
    "full_manifest",
    "init_weights",
    "POOL_QUERY",
    "HEAD_LN_SCALE",
    "HEAD_LN_SHIFT",
    "HEAD_PROJ_WEIGHT",
    "HEAD_PROJ_BIAS",
]

POOL_QUERY = "speaker_encoder/pool/query"
HEAD_LN_SCALE = "content_head/ln_scale"
HEAD_LN_SHIFT = "content_head/ln_shift"
HEAD_PROJ_WEIGHT = "content_head/proj/weight"
HEAD_PROJ_BIAS = "content_head/proj/bias"

LAYER_NORM_EPS = 1e-5


def _residual_unit(prefix: str, channels: int, kernel: int, dilation: int) -> Residual:
    return Residual(
        (
            Elu(),
            Conv(f"{prefix}/conv0", ConvSpec(channels, channels, kernel, dilation=dilation)),
            Elu(),
            Conv(f"{prefix}/conv1", ConvSpec(channels, channels, 1)),
        )
    )


def _build_encoder(prefix: str, scale: int, cfg: ArchitectureConfig) -> GraphPlan:
    nodes: list = [Conv(f"{prefix}/in_conv", ConvSpec(1, scale, cfg.kernel_size))]
    channels = scale
    for b, stride in enumerate(cfg.encoder_strides):
        for j, dilation in enumerate(cfg.residual_dilations):
            nodes.append(_residual_unit(f"{prefix}/block{b}/unit{j}", channels, cfg.kernel_size, dilation))
        nodes.append(Elu())
        nodes.append(
            Conv(
                f"{prefix}/block{b}/down",
                ConvSpec(channels, channels * 2, 2 * stride, stride=stride),
            )
        )
        channels *= 2
    nodes.append(Elu())
    nodes.append(Conv(f"{prefix}/out_conv", ConvSpec(channels, cfg.embedding_dim, cfg.encoder_final_kernel)))
    return GraphPlan(name=prefix, nodes=tuple(nodes), in_channels=1, chunk_frames=cfg.frame_samples)


def build_content_encoder(cfg: ArchitectureConfig) -> GraphPlan:
    """Soft speech-unit encoder: audio in, one embedding per frame out, no modulation."""
    return _build_encoder("content_encoder", cfg.content_scale, cfg)


def build_speaker_encoder(cfg: ArchitectureConfig) -> GraphPlan:
    """Per-frame part of the speaker encoder (same topology, smaller scale)."""
    return _build_encoder("speaker_encoder", cfg.speaker_scale, cfg)


def build_decoder(cfg: ArchitectureConfig) -> GraphPlan:
    """Upsampling decoder with speaker modulation between residual units."""
    channels = 16 * cfg.decoder_scale
    nodes: list = [Conv("decoder/in_conv", ConvSpec(cfg.decoder_in_channels, channels, cfg.kernel_size))]
    for b, stride in enumerate(cfg.decoder_strides):
        nodes.append(Elu())
        nodes.append(
            ConvTranspose(
                f"decoder/block{b}/up",
                ConvSpec(channels, channels // 2, 2 * stride, stride=stride, transposed=True),
            )
        )
        channels //= 2
        for j, dilation in enumerate(cfg.residual_dilations):
            if j > 0:
                nodes.append(Film(f"decoder/block{b}/film{j - 1}", channels, cfg.embedding_dim))
            nodes.append(_residual_unit(f"decoder/block{b}/unit{j}", channels, cfg.kernel_size, dilation))
    nodes.append(Elu())
    nodes.append(Conv("decoder/out_conv", ConvSpec(channels, 1, cfg.kernel_size)))
    nodes.append(Tanh())
    return GraphPlan(name="decoder", nodes=tuple(nodes), in_channels=cfg.decoder_in_channels, chunk_frames=1)


def learnable_pool(frames: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Attention-weighted average of per-frame embeddings with a single query.

    ``scores_t = (query . frame_t) / sqrt(dim)``; weights are the softmax of
    the scores; the output is the weighted sum of the frames.  A zero query
    degenerates to exact average pooling.
    """
    frames = np.asarray(frames, dtype=np.float32)
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if frames.ndim != 2 or frames.shape[0] != query.shape[0]:
        raise ShapeError(
            f"pooling expects ({query.shape[0]}, frames) embeddings, got {frames.shape}"
        )
    if frames.shape[1] == 0:
        raise ValueError("cannot pool zero frames")
    scores = (query @ frames) / np.float32(np.sqrt(query.shape[0]))
    weights = softmax(scores)
    return frames @ weights


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Normalise a vector to zero mean / unit variance, then scale and shift."""
    x = np.asarray(x, dtype=np.float32)
    mean = x.mean()
    var = x.var()
    return (x - mean) / np.sqrt(var + np.float32(LAYER_NORM_EPS)) * scale + shift


def predict_pseudo_labels(latent: np.ndarray, weights: Mapping[str, np.ndarray]) -> np.ndarray:
    """Class probabilities of the pseudo-label projection head.

    ``softmax(proj(layer_norm(latent)))`` — this head sits *after* the point
    where the decoder taps the content latent, so it never affects synthesis.
    """
    latent = np.asarray(latent, dtype=np.float32).reshape(-1)
    normed = layer_norm(latent, weights[HEAD_LN_SCALE], weights[HEAD_LN_SHIFT])
    logits = affine(normed, weights[HEAD_PROJ_WEIGHT], weights[HEAD_PROJ_BIAS])
    return softmax(logits)


def full_manifest(cfg: ArchitectureConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter the runtime needs: three plans plus pooling and head."""
    manifest: dict[str, tuple[int, ...]] = {}
    manifest.update(build_content_encoder(cfg).param_manifest())
    manifest.update(build_speaker_encoder(cfg).param_manifest())
    manifest[POOL_QUERY] = (cfg.embedding_dim,)
    manifest.update(build_decoder(cfg).param_manifest())
    manifest[HEAD_LN_SCALE] = (cfg.embedding_dim,)
    manifest[HEAD_LN_SHIFT] = (cfg.embedding_dim,)
    manifest[HEAD_PROJ_WEIGHT] = (cfg.pseudo_label_classes, cfg.embedding_dim)
    manifest[HEAD_PROJ_BIAS] = (cfg.pseudo_label_classes,)
    return manifest


def init_weights(cfg: ArchitectureConfig, seed: int) -> ModelWeights:
    """Deterministic fan-in-scaled Gaussian weights (same seed, same bits).

    Convolution and affine weights are drawn with standard deviation
    ``1/sqrt(fan_in)``; biases and shifts start at zero, norm scales at one.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, shape in full_manifest(cfg).items():
        if name.endswith("/weight") or name.endswith("_w") or name == POOL_QUERY:
            fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
            std = np.float32(1.0 / np.sqrt(fan_in))
            tensors[name] = rng.standard_normal(shape, dtype=np.float32) * std
        elif name == HEAD_LN_SCALE:
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return ModelWeights(config=cfg, tensors=tensors)
