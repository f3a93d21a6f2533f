"""Readers and writers for the engine's on-disk formats.

All binary formats are little-endian with a 4-byte ASCII magic and a u32
version, so they are trivially parseable from any language:

  features      "XSFM" | u32 version=1 | u32 n_frames | u32 dim   | f32[n*dim]
  segmentation  "XSSG" | u32 version=1 | u32 n_frames | u32 h | u32 w | u16[n*h*w]
  raw frames    "XSFR" | u32 version=1 | u32 n_frames | u32 h | u32 w | u8[n*h*w*3]
  fragments     JSON array of [start, end] integer pairs

Every loader/saver pair round-trips valid files byte-exactly.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .types import Fragment, Fragmentation, FrameFeatures, SegmentationMaps, ValidationError

MAGIC_FEATURES = b"XSFM"
MAGIC_SEGMENTATION = b"XSSG"
MAGIC_FRAMES = b"XSFR"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; the message names the byte offset of the problem."""


def _read_header(raw: bytes, magic: bytes, n_dims: int, path) -> tuple[int, ...]:
    header_len = 8 + 4 * n_dims
    if len(raw) < header_len:
        raise FormatError(
            f"{path}: truncated header, need {header_len} bytes, file ends at byte {len(raw)}"
        )
    if raw[:4] != magic:
        raise FormatError(
            f"{path}: bad magic {raw[:4]!r} at byte 0, expected {magic.decode()!r}"
        )
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte 4")
    dims = struct.unpack_from(f"<{n_dims}I", raw, 8)
    for i, d in enumerate(dims):
        if d < 1:
            raise FormatError(f"{path}: zero dimension in header at byte {8 + 4 * i}")
    return dims


def _read_payload(raw: bytes, offset: int, count: int, dtype: str, path) -> np.ndarray:
    itemsize = np.dtype(dtype).itemsize
    expected = offset + count * itemsize
    if len(raw) < expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, file ends at byte {len(raw)}"
        )
    if len(raw) > expected:
        raise FormatError(f"{path}: {len(raw) - expected} trailing bytes at byte {expected}")
    return np.frombuffer(raw, dtype=dtype, count=count, offset=offset)


def load_features(path) -> FrameFeatures:
    raw = Path(path).read_bytes()
    n_frames, dim = _read_header(raw, MAGIC_FEATURES, 2, path)
    flat = _read_payload(raw, 16, n_frames * dim, "<f4", path)
    finite = np.isfinite(flat)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FormatError(f"{path}: non-finite float at byte {16 + 4 * bad}")
    return FrameFeatures(flat.reshape(n_frames, dim))


def save_features(features: FrameFeatures, path) -> None:
    data = features.data.astype("<f4", copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC_FEATURES)
        fh.write(struct.pack("<3I", FORMAT_VERSION, features.n_frames, features.dim))
        fh.write(data.tobytes(order="C"))


def load_segmentation(path) -> SegmentationMaps:
    raw = Path(path).read_bytes()
    n_frames, height, width = _read_header(raw, MAGIC_SEGMENTATION, 3, path)
    flat = _read_payload(raw, 20, n_frames * height * width, "<u2", path)
    return SegmentationMaps(flat.reshape(n_frames, height, width))


def save_segmentation(seg: SegmentationMaps, path) -> None:
    data = seg.labels.astype("<u2", copy=False)
    with open(path, "wb") as fh:
        fh.write(MAGIC_SEGMENTATION)
        fh.write(struct.pack("<4I", FORMAT_VERSION, seg.n_frames, seg.height, seg.width))
        fh.write(data.tobytes(order="C"))


def load_frames(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    n_frames, height, width = _read_header(raw, MAGIC_FRAMES, 3, path)
    flat = _read_payload(raw, 20, n_frames * height * width * 3, "u1", path)
    frames = flat.reshape(n_frames, height, width, 3).copy()
    frames.flags.writeable = False
    return frames


def save_frames(frames: np.ndarray, path) -> None:
    frames = np.asarray(frames, dtype=np.uint8)
    if frames.ndim != 4 or frames.shape[3] != 3:
        raise ValidationError(f"frames: expected (n, h, w, 3), got {frames.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC_FRAMES)
        fh.write(struct.pack("<4I", FORMAT_VERSION, *frames.shape[:3]))
        fh.write(frames.tobytes(order="C"))


def load_fragments(path) -> Fragmentation:
    text = Path(path).read_text(encoding="utf-8")
    try:
        pairs = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at byte {exc.pos}") from None
    if not isinstance(pairs, list):
        raise FormatError(f"{path}: expected a JSON array of [start, end] pairs")
    frags = []
    for i, pair in enumerate(pairs):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(v, int) for v in pair)
        ):
            raise FormatError(f"{path}: entry {i} is not an integer [start, end] pair")
        frags.append(Fragment(pair[0], pair[1]))
    return Fragmentation(tuple(frags))


def save_fragments(frag: Fragmentation, path) -> None:
    Path(path).write_text(json.dumps(frag.as_pairs()) + "\n", encoding="utf-8")
