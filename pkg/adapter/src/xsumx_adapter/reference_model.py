"""The shipped scoring model and the feature-file reader.

The reference model carries no deep-learning dependency: a frame scores the
L2 norm of its feature vector, normalized by the largest norm of the
unperturbed video, then smoothed with a centered moving average of window 5
(truncated at the sequence edges).  Masked frames have their features zeroed
before the norms are taken.  The explanation engine ships the same toy
in-process, so runs through this server reproduce in-process results.

Real summarizers plug in as a callable with the same signature as
`reference_model`; see `xsumx_adapter.server.serve`.
"""
from __future__ import annotations

import struct

import numpy as np

FEATURES_MAGIC = b"XSFM"
FORMAT_VERSION = 1
SMOOTHING_WINDOW = 5


def load_feature_file(path: str) -> np.ndarray:
    """Read an "XSFM" feature file into a float64 (n_frames, dim) matrix."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != FEATURES_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    version, n_frames, dim = struct.unpack_from("<3I", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if n_frames < 1 or dim < 1:
        raise ValueError(f"{path}: degenerate shape {n_frames}x{dim}")
    expected = 16 + 4 * n_frames * dim
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    flat = np.frombuffer(raw, dtype="<f4", count=n_frames * dim, offset=16)
    if not np.isfinite(flat).all():
        raise ValueError(f"{path}: non-finite feature value")
    return flat.astype(np.float64).reshape(n_frames, dim)


def reference_model(features: np.ndarray, masked: np.ndarray) -> np.ndarray:
    """Smoothed, normalized feature energy per frame.

    `masked` is a boolean vector marking frames whose features are zeroed
    first.  Normalization uses the max norm of the unmasked video, so an
    all-zero video scores zero everywhere.
    """
    norms = np.linalg.norm(features, axis=1)
    base_max = norms.max()
    if base_max == 0.0:
        return np.zeros(features.shape[0])
    x = norms / base_max
    x[np.asarray(masked, dtype=bool)] = 0.0
    window = np.ones(SMOOTHING_WINDOW)
    sums = np.convolve(x, window, mode="same")
    counts = np.convolve(np.ones(x.shape[0]), window, mode="same")
    return sums / counts
