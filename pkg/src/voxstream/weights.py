"""Portable weight store: named float32 tensors in the "SVW1" container.

File layout (all integers little-endian):

``"SVW1"`` magic (4 bytes) | uint32 manifest length | manifest (UTF-8) |
uint32 CRC-32 of the blob | blob of raw little-endian float32 tensors.

The manifest holds one ``name dtype shape offset`` line per tensor (shape as
``d0xd1x...``, offset in bytes into the blob) preceded by ``#c key=value``
lines carrying the architecture configuration, which makes a weight file
self-describing.  Offsets must tile the blob exactly; the CRC is validated on
load, so any payload corruption is detected before use.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .config import ArchitectureConfig
from .errors import (
    MissingLayerError,
    WeightChecksumError,
    WeightFormatError,
    WeightVersionError,
)

__all__ = ["FORMAT_MAGIC", "ModelWeights", "save_weights", "load_weights"]

FORMAT_MAGIC = b"SVW1"
_HEADER = struct.Struct("<4sI")
_CRC = struct.Struct("<I")


@dataclass
class ModelWeights(Mapping[str, np.ndarray]):
    """Immutable-by-convention mapping of layer name to float32 tensor."""

    config: ArchitectureConfig
    tensors: dict[str, np.ndarray] = field(repr=False)

    def __post_init__(self) -> None:
        self.tensors = {
            name: np.ascontiguousarray(np.asarray(value, dtype=np.float32))
            for name, value in self.tensors.items()
        }

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise MissingLayerError(f"weights are missing layer '{name}'") from None

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def manifest(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(value.shape) for name, value in self.tensors.items()}

    def _blob(self) -> bytes:
        return b"".join(value.tobytes() for value in self.tensors.values())

    def checksum(self) -> int:
        """CRC-32 over the raw tensor payload, in manifest order."""
        return zlib.crc32(self._blob()) & 0xFFFFFFFF

    def validate_coverage(self, required: Mapping[str, tuple[int, ...]]) -> None:
        """Raise if any required layer is missing or has the wrong shape."""
        for name, shape in required.items():
            value = self[name]
            if tuple(value.shape) != tuple(shape):
                raise MissingLayerError(
                    f"layer '{name}' has shape {tuple(value.shape)}, expected {tuple(shape)}"
                )

    def save(self, path: str | Path) -> None:
        save_weights(self, path)

    @classmethod
    def load(cls, path: str | Path) -> "ModelWeights":
        return load_weights(path)


def save_weights(weights: ModelWeights, path: str | Path) -> None:
    """Write the SVW1 container; round-trips bit-exactly."""
    lines = [f"#c {key}={_fmt_config_value(value)}" for key, value in weights.config.to_dict().items()]
    offset = 0
    for name, value in weights.tensors.items():
        shape = "x".join(str(d) for d in value.shape) or "1"
        lines.append(f"{name} float32 {shape} {offset}")
        offset += value.nbytes
    manifest = ("\n".join(lines) + "\n").encode("utf-8")
    blob = weights._blob()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FORMAT_MAGIC, len(manifest)))
        fh.write(manifest)
        fh.write(_CRC.pack(zlib.crc32(blob) & 0xFFFFFFFF))
        fh.write(blob)


def _fmt_config_value(value: object) -> str:
    if isinstance(value, (tuple, list)):
        return ",".join(str(v) for v in value)
    return str(value)


def load_weights(path: str | Path) -> ModelWeights:
    """Read and validate an SVW1 container.

    Raises:
        WeightVersionError: unknown magic/version string.
        WeightChecksumError: payload does not match the stored CRC-32.
        WeightFormatError: malformed manifest, offsets or sizes.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise WeightFormatError(f"{path}: file too short for a weight container")
    magic, manifest_len = _HEADER.unpack_from(data, 0)
    if magic != FORMAT_MAGIC:
        raise WeightVersionError(
            f"{path}: unknown weight-file version {magic!r}, expected {FORMAT_MAGIC!r}"
        )
    body = _HEADER.size
    if len(data) < body + manifest_len + _CRC.size:
        raise WeightFormatError(f"{path}: truncated manifest")
    try:
        manifest = data[body : body + manifest_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WeightFormatError(f"{path}: manifest is not valid UTF-8: {exc}") from None
    (crc_stored,) = _CRC.unpack_from(data, body + manifest_len)
    blob = data[body + manifest_len + _CRC.size :]
    if zlib.crc32(blob) & 0xFFFFFFFF != crc_stored:
        raise WeightChecksumError(f"{path}: payload CRC mismatch, file is corrupt")

    config_values: dict[str, object] = {}
    entries: list[tuple[str, tuple[int, ...], int]] = []
    for lineno, line in enumerate(manifest.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#c "):
            key, _, value = line[3:].partition("=")
            config_values[key.strip()] = value.strip()
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise WeightFormatError(f"{path}: manifest line {lineno} is malformed: {line!r}")
        name, dtype, shape_s, offset_s = parts
        if dtype != "float32":
            raise WeightFormatError(f"{path}: unsupported dtype '{dtype}' for layer '{name}'")
        try:
            shape = tuple(int(d) for d in shape_s.split("x"))
            offset = int(offset_s)
        except ValueError:
            raise WeightFormatError(f"{path}: manifest line {lineno} is malformed: {line!r}") from None
        entries.append((name, shape, offset))

    try:
        config = ArchitectureConfig.from_dict(config_values)
    except Exception as exc:
        raise WeightFormatError(f"{path}: invalid embedded configuration: {exc}") from None

    tensors: dict[str, np.ndarray] = {}
    running = 0
    for name, shape, offset in entries:
        if name in tensors:
            raise WeightFormatError(f"{path}: duplicate layer '{name}' in manifest")
        if offset != running:
            raise WeightFormatError(
                f"{path}: layer '{name}' offset {offset} does not follow the previous tensor"
            )
        size = int(np.prod(shape)) * 4
        if offset + size > len(blob):
            raise WeightFormatError(f"{path}: layer '{name}' extends past the payload")
        array = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=offset)
        tensors[name] = array.reshape(shape).copy()
        running = offset + size
    if running != len(blob):
        raise WeightFormatError(
            f"{path}: payload has {len(blob)} bytes but manifest accounts for {running}"
        )
    return ModelWeights(config=config, tensors=tensors)
