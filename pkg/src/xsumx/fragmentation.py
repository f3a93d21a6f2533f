"""Temporal fragmentation: desk-scale shot detection and the fallback rule.

Production runs are expected to supply a fragmentation from a real shot
segmentation model via the fragments file; `detect_shots` is a simple
cosine-distance stand-in so the engine is runnable end to end without one.
A video with fewer than `min_fragments` fragments is re-partitioned into
near-equal pieces so that top-3 selection still condenses it meaningfully.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import Fragment, Fragmentation, FrameFeatures, ScoreSequence, ValidationError


@dataclass(frozen=True)
class FragmenterConfig:
    distance_threshold: float = 0.3
    min_fragments: int = 10
    fallback_fragment_count: int = 12

    def __post_init__(self):
        if not self.distance_threshold > 0:
            raise ValidationError("fragmenter: distance_threshold must be > 0")
        if self.min_fragments < 1:
            raise ValidationError("fragmenter: min_fragments must be >= 1")
        if self.fallback_fragment_count < self.min_fragments:
            raise ValidationError(
                "fragmenter: fallback_fragment_count must be >= min_fragments"
            )


def detect_shots(features: FrameFeatures, cfg: FragmenterConfig) -> Fragmentation:
    """Place a boundary after frame i when 1 - cos(f_i, f_{i+1}) exceeds the threshold."""
    f = features.data.astype(np.float64)
    n = features.n_frames
    if n == 1:
        return Fragmentation((Fragment(0, 0),))
    norms = np.linalg.norm(f, axis=1)
    dots = np.einsum("ij,ij->i", f[:-1], f[1:])
    denom = norms[:-1] * norms[1:]
    sims = np.zeros(n - 1)
    nz = denom > 0
    sims[nz] = dots[nz] / denom[nz]
    # two zero vectors are identical, one zero vector is maximally distant
    sims[(norms[:-1] == 0) & (norms[1:] == 0)] = 1.0
    boundaries = np.flatnonzero(1.0 - sims > cfg.distance_threshold)
    starts = [0] + [int(b) + 1 for b in boundaries]
    ends = [s - 1 for s in starts[1:]] + [n - 1]
    return Fragmentation(tuple(Fragment(s, e) for s, e in zip(starts, ends)))


def _near_equal_partition(n_frames: int, parts: int) -> Fragmentation:
    # remainder frames go to the earliest fragments, so lengths differ by at most 1
    base, rem = divmod(n_frames, parts)
    lengths = [base + 1] * rem + [base] * (parts - rem)
    frags, start = [], 0
    for length in lengths:
        frags.append(Fragment(start, start + length - 1))
        start += length
    return Fragmentation(tuple(frags))


def subdivide_if_needed(frag: Fragmentation, cfg: FragmenterConfig) -> Fragmentation:
    """Re-partition a too-coarse fragmentation into near-equal pieces.

    Left unchanged when the fragment count already reaches `min_fragments`;
    videos shorter than the fallback count get one fragment per frame.
    Idempotent.
    """
    if len(frag) >= cfg.min_fragments:
        return frag
    n = frag.n_frames
    if n >= cfg.fallback_fragment_count:
        return _near_equal_partition(n, cfg.fallback_fragment_count)
    return _near_equal_partition(n, n)


def fragment_scores(scores, frag: Fragmentation) -> np.ndarray:
    """Arithmetic mean of per-frame scores over each fragment, in fragment order."""
    values = scores.scores if isinstance(scores, ScoreSequence) else np.asarray(scores, float)
    if values.shape[0] != frag.n_frames:
        raise ValidationError(
            f"fragment_scores: {values.shape[0]} scores for {frag.n_frames} frames"
        )
    return np.array([values[f.frame_slice].mean() for f in frag])
