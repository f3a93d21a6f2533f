import json
import struct

import numpy as np
import pytest

from xsumx.formats import (
    FormatError,
    load_features,
    load_fragments,
    load_frames,
    load_segmentation,
    save_features,
    save_fragments,
    save_frames,
    save_segmentation,
)
from xsumx.types import Fragment, Fragmentation, FrameFeatures, SegmentationMaps, ValidationError


def test_features_header_decodes(tmp_path):
    path = tmp_path / "f.bin"
    payload = struct.pack("<6f", 1, 2, 3, 4, 5, 6)
    path.write_bytes(b"XSFM" + struct.pack("<3I", 1, 3, 2) + payload)
    feats = load_features(path)
    assert feats.n_frames == 3 and feats.dim == 2
    np.testing.assert_array_equal(feats.data, [[1, 2], [3, 4], [5, 6]])


def test_features_bad_magic(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"XXXX" + struct.pack("<3I", 1, 1, 1) + struct.pack("<f", 0.0))
    with pytest.raises(FormatError, match="bad magic"):
        load_features(path)


def test_features_truncated_names_offset(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"XSFM" + struct.pack("<3I", 1, 3, 2) + struct.pack("<3f", 1, 2, 3))
    with pytest.raises(FormatError, match="byte 28"):
        load_features(path)


def test_features_non_finite_names_offset(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(
        b"XSFM" + struct.pack("<3I", 1, 1, 2) + struct.pack("<2f", 1.0, np.inf)
    )
    with pytest.raises(FormatError, match="byte 20"):
        load_features(path)


def test_features_zero_frames_rejected(tmp_path):
    path = tmp_path / "f.bin"
    path.write_bytes(b"XSFM" + struct.pack("<3I", 1, 0, 2))
    with pytest.raises(FormatError, match="zero dimension"):
        load_features(path)


def test_features_round_trip_byte_exact(tmp_path):
    rng = np.random.default_rng(7)
    for i in range(20):
        n, d = int(rng.integers(1, 30)), int(rng.integers(1, 20))
        feats = FrameFeatures(rng.normal(size=(n, d)).astype(np.float32))
        first = tmp_path / f"a{i}.bin"
        second = tmp_path / f"b{i}.bin"
        save_features(feats, first)
        save_features(load_features(first), second)
        assert first.read_bytes() == second.read_bytes()


def test_segmentation_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    seg = SegmentationMaps(rng.integers(0, 9, size=(4, 6, 5)).astype(np.uint16))
    path = tmp_path / "s.bin"
    save_segmentation(seg, path)
    loaded = load_segmentation(path)
    np.testing.assert_array_equal(loaded.labels, seg.labels)
    second = tmp_path / "s2.bin"
    save_segmentation(loaded, second)
    assert path.read_bytes() == second.read_bytes()


def test_frames_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    frames = rng.integers(0, 256, size=(3, 8, 7, 3)).astype(np.uint8)
    path = tmp_path / "v.bin"
    save_frames(frames, path)
    loaded = load_frames(path)
    np.testing.assert_array_equal(loaded, frames)
    second = tmp_path / "v2.bin"
    save_frames(loaded, second)
    assert path.read_bytes() == second.read_bytes()


def test_frames_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "v.bin"
    save_frames(np.zeros((1, 2, 2, 3), dtype=np.uint8), path)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        load_frames(path)


def test_fragments_valid_pairs(tmp_path):
    path = tmp_path / "frags.json"
    path.write_text("[[0, 4], [5, 9]]")
    frag = load_fragments(path)
    assert frag.as_pairs() == [[0, 4], [5, 9]]


def test_fragments_gap_is_validation_error(tmp_path):
    path = tmp_path / "frags.json"
    path.write_text("[[0, 4], [6, 9]]")
    with pytest.raises(ValidationError, match="gap after fragment 0"):
        load_fragments(path)


def test_fragments_overlap_is_validation_error(tmp_path):
    path = tmp_path / "frags.json"
    path.write_text("[[0, 6], [5, 9]]")
    with pytest.raises(ValidationError, match="overlap"):
        load_fragments(path)


def test_fragments_bad_json(tmp_path):
    path = tmp_path / "frags.json"
    path.write_text("[[0, 4")
    with pytest.raises(FormatError, match="invalid JSON"):
        load_fragments(path)


def test_fragments_round_trip_byte_exact(tmp_path):
    frag = Fragmentation((Fragment(0, 2), Fragment(3, 3), Fragment(4, 10)))
    first = tmp_path / "a.json"
    second = tmp_path / "b.json"
    save_fragments(frag, first)
    save_fragments(load_fragments(first), second)
    assert first.read_bytes() == second.read_bytes()
    assert json.loads(first.read_text()) == [[0, 2], [3, 3], [4, 10]]
