"""Domain types shared across the explanation engine.

Every type is immutable after construction (numpy payloads are marked
non-writeable), so instances can be handed to concurrent workers freely.
Constructors take ownership of the arrays they are given.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

VOID_ID = 0  # reserved segmentation label for unlabeled pixels


class ValidationError(ValueError):
    """An input violates a structural invariant."""


class ScoreRangeWarning(UserWarning):
    """Scores fall outside [0, 1]; tolerated because external oracles may be uncalibrated."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class FrameFeatures:
    """Per-frame feature vectors: one float32 row per frame."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValidationError(f"features: expected a 2-d matrix, got {data.ndim}-d")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError(f"features: degenerate shape {data.shape}")
        if not np.isfinite(data).all():
            bad = int(np.flatnonzero(~np.isfinite(data).ravel())[0])
            raise ValidationError(
                f"features: non-finite value at row {bad // data.shape[1]}, "
                f"column {bad % data.shape[1]}"
            )
        object.__setattr__(self, "data", _freeze(data))

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ScoreSequence:
    """Per-frame importance scores as produced by a summarizer."""

    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ValidationError(f"scores: expected a 1-d sequence, got {scores.ndim}-d")
        if scores.shape[0] < 1:
            raise ValidationError("scores: empty sequence")
        if not np.isfinite(scores).all():
            bad = int(np.flatnonzero(~np.isfinite(scores))[0])
            raise ValidationError(f"scores: non-finite value at frame {bad}")
        if scores.min() < 0.0 or scores.max() > 1.0:
            warnings.warn(
                f"scores outside [0, 1] (min {scores.min():.4g}, max {scores.max():.4g})",
                ScoreRangeWarning,
                stacklevel=2,
            )
        object.__setattr__(self, "scores", _freeze(scores))

    def __len__(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True, order=True)
class Fragment:
    """A contiguous run of frames; both endpoints inclusive, 0-based."""

    start: int
    end: int

    def __post_init__(self):
        if not (0 <= self.start <= self.end):
            raise ValidationError(f"fragment: invalid range [{self.start}, {self.end}]")

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1

    @property
    def frame_slice(self) -> slice:
        return slice(self.start, self.end + 1)


@dataclass(frozen=True)
class Fragmentation:
    """An ordered partition of [0, n_frames-1] into contiguous fragments."""

    fragments: tuple[Fragment, ...]

    def __post_init__(self):
        frags = tuple(
            f if isinstance(f, Fragment) else Fragment(int(f[0]), int(f[1]))
            for f in self.fragments
        )
        if not frags:
            raise ValidationError("fragmentation: no fragments")
        if frags[0].start != 0:
            raise ValidationError(
                f"fragmentation: must start at frame 0, fragment 0 starts at {frags[0].start}"
            )
        for i in range(len(frags) - 1):
            expected = frags[i].end + 1
            got = frags[i + 1].start
            if got > expected:
                raise ValidationError(
                    f"fragmentation: gap after fragment {i} "
                    f"(fragment {i} ends at {frags[i].end}, fragment {i + 1} starts at {got})"
                )
            if got < expected:
                raise ValidationError(
                    f"fragmentation: overlap between fragments {i} and {i + 1} "
                    f"(fragment {i} ends at {frags[i].end}, fragment {i + 1} starts at {got})"
                )
        object.__setattr__(self, "fragments", frags)

    @property
    def n_frames(self) -> int:
        return self.fragments[-1].end + 1

    def __len__(self) -> int:
        return len(self.fragments)

    def __iter__(self) -> Iterator[Fragment]:
        return iter(self.fragments)

    def __getitem__(self, k: int) -> Fragment:
        return self.fragments[k]

    def as_pairs(self) -> list[list[int]]:
        return [[f.start, f.end] for f in self.fragments]


@dataclass(frozen=True)
class SegmentationMaps:
    """Per-frame grids of uint16 object-instance IDs; ID 0 is void.

    Temporal consistency of IDs (same ID = same object across frames)
    is an input contract and is not verified here.
    """

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint16)
        if labels.ndim != 3:
            raise ValidationError(f"segmentation: expected (frames, h, w), got {labels.ndim}-d")
        if min(labels.shape) < 1:
            raise ValidationError(f"segmentation: degenerate shape {labels.shape}")
        object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n_frames(self) -> int:
        return self.labels.shape[0]

    @property
    def height(self) -> int:
        return self.labels.shape[1]

    @property
    def width(self) -> int:
        return self.labels.shape[2]


_SPEC_KINDS = ("none", "fragments", "objects")


@dataclass(frozen=True)
class PerturbationSpec:
    """Declarative description of what is masked in one perturbation."""

    kind: str
    masked_fragments: frozenset[int] = frozenset()
    target_fragment: Optional[int] = None
    masked_objects: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.kind not in _SPEC_KINDS:
            raise ValidationError(f"perturbation: unknown kind {self.kind!r}")
        object.__setattr__(self, "masked_fragments", frozenset(int(i) for i in self.masked_fragments))
        object.__setattr__(self, "masked_objects", frozenset(int(i) for i in self.masked_objects))
        if self.kind == "none":
            if self.masked_fragments or self.masked_objects or self.target_fragment is not None:
                raise ValidationError("perturbation: kind 'none' must not carry masks")
        elif self.kind == "fragments":
            if not self.masked_fragments:
                raise ValidationError("perturbation: kind 'fragments' needs a non-empty mask set")
            if self.masked_objects or self.target_fragment is not None:
                raise ValidationError("perturbation: kind 'fragments' must not carry object masks")
        else:  # objects
            if self.target_fragment is None:
                raise ValidationError("perturbation: kind 'objects' needs a target fragment")
            if not self.masked_objects:
                raise ValidationError("perturbation: kind 'objects' needs a non-empty object set")
            if self.masked_fragments:
                raise ValidationError("perturbation: kind 'objects' must not carry fragment masks")

    @staticmethod
    def none() -> "PerturbationSpec":
        return PerturbationSpec("none")

    @staticmethod
    def for_fragments(indices) -> "PerturbationSpec":
        return PerturbationSpec("fragments", masked_fragments=frozenset(indices))

    @staticmethod
    def for_objects(fragment: int, object_ids) -> "PerturbationSpec":
        return PerturbationSpec(
            "objects", target_fragment=int(fragment), masked_objects=frozenset(object_ids)
        )

    def to_wire(self) -> dict:
        if self.kind == "none":
            return {"kind": "none"}
        if self.kind == "fragments":
            return {"kind": "fragments", "masked_fragments": sorted(self.masked_fragments)}
        return {
            "kind": "objects",
            "fragment": self.target_fragment,
            "masked_objects": sorted(self.masked_objects),
        }

    @staticmethod
    def from_wire(obj: dict) -> "PerturbationSpec":
        kind = obj.get("kind")
        if kind == "none":
            return PerturbationSpec.none()
        if kind == "fragments":
            return PerturbationSpec.for_fragments(obj.get("masked_fragments", ()))
        if kind == "objects":
            return PerturbationSpec.for_objects(obj.get("fragment"), obj.get("masked_objects", ()))
        raise ValidationError(f"perturbation: unknown wire kind {kind!r}")


NONE_SPEC = PerturbationSpec.none()


@dataclass(frozen=True)
class VideoBundle:
    """All per-video inputs to the engine.

    `frames` (uint8 RGB, shape (n, h, w, 3)) is required only for pixel-space
    oracles and overlay rendering; `segmentation` only for object-level work.
    """

    video_id: str
    features: FrameFeatures
    fragmentation: Fragmentation
    frames: Optional[np.ndarray] = None
    segmentation: Optional[SegmentationMaps] = None

    def __post_init__(self):
        if self.frames is not None:
            frames = np.asarray(self.frames, dtype=np.uint8)
            if frames.ndim != 4 or frames.shape[3] != 3:
                raise ValidationError(
                    f"frames: expected (n, h, w, 3) uint8 RGB, got shape {frames.shape}"
                )
            object.__setattr__(self, "frames", _freeze(frames))

    @property
    def n_frames(self) -> int:
        return self.features.n_frames


def validate_bundle(bundle: VideoBundle) -> list[str]:
    """Cross-component consistency check; returns findings, never raises.

    An empty list means every component agrees on frame counts and spatial
    dimensions.  Single-component invariants are enforced at construction.
    """
    findings: list[str] = []
    n = bundle.features.n_frames
    frag_end = bundle.fragmentation.n_frames - 1
    if frag_end != n - 1:
        findings.append(
            f"fragmentation: covers frames 0..{frag_end} but features have {n} frames"
        )
    if bundle.frames is not None and bundle.frames.shape[0] != n:
        findings.append(
            f"frames: n_frames {bundle.frames.shape[0]} != features n_frames {n}"
        )
    if bundle.segmentation is not None and bundle.segmentation.n_frames != n:
        findings.append(
            f"segmentation: n_frames {bundle.segmentation.n_frames} != features n_frames {n}"
        )
    if bundle.frames is not None and bundle.segmentation is not None:
        fh, fw = bundle.frames.shape[1], bundle.frames.shape[2]
        sh, sw = bundle.segmentation.height, bundle.segmentation.width
        if (fh, fw) != (sh, sw):
            findings.append(
                f"segmentation: spatial size {sh}x{sw} != frames size {fh}x{fw}"
            )
    return findings
