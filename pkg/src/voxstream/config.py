"""Network scale configuration shared by plan builders and weight files."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .errors import GraphConfigError
from .pitch import SIDE_CHANNELS

__all__ = ["ArchitectureConfig"]


@dataclass(frozen=True)
class ArchitectureConfig:
    """Scales and strides of the three networks.

    Defaults are the full deployment scale: content encoder C=64, speaker
    encoder C=32, decoder C=40, embeddings D=64, aggregate stride 320 (20 ms
    frames at 16 kHz), 100 pseudo-label classes.
    """

    content_scale: int = 64
    speaker_scale: int = 32
    decoder_scale: int = 40
    embedding_dim: int = 64
    encoder_strides: tuple[int, ...] = (2, 4, 5, 8)
    decoder_strides: tuple[int, ...] = (8, 5, 4, 2)
    residual_units: int = 3
    residual_dilations: tuple[int, ...] = (1, 3, 9)
    kernel_size: int = 7
    encoder_final_kernel: int = 3
    pseudo_label_classes: int = 100
    side_channels: int = SIDE_CHANNELS

    def __post_init__(self) -> None:
        if math.prod(self.encoder_strides) != math.prod(self.decoder_strides):
            raise GraphConfigError(
                f"encoder strides {self.encoder_strides} and decoder strides "
                f"{self.decoder_strides} must have equal products"
            )
        if len(self.residual_dilations) != self.residual_units:
            raise GraphConfigError("one dilation per residual unit is required")

    @property
    def frame_samples(self) -> int:
        """Audio samples per latent frame (the aggregate encoder stride)."""
        return math.prod(self.encoder_strides)

    @property
    def decoder_in_channels(self) -> int:
        return self.embedding_dim + self.side_channels

    @classmethod
    def small(cls) -> "ArchitectureConfig":
        """A reduced scale with identical topology, for fast tests."""
        return cls(content_scale=8, speaker_scale=4, decoder_scale=6, embedding_dim=16)

    def to_dict(self) -> dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict[str, object]) -> "ArchitectureConfig":
        kwargs = {}
        for f in fields(cls):
            if f.name not in values:
                continue
            raw = values[f.name]
            if isinstance(raw, str):
                if "," in raw or f.name.endswith("strides") or f.name.endswith("dilations"):
                    kwargs[f.name] = tuple(int(v) for v in raw.split(",") if v)
                else:
                    kwargs[f.name] = int(raw)
            elif isinstance(raw, (list, tuple)):
                kwargs[f.name] = tuple(int(v) for v in raw)
            else:
                kwargs[f.name] = int(raw)  # type: ignore[arg-type]
        return cls(**kwargs)
