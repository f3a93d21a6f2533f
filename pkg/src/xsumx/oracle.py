"""Black-box summarizer oracles.

An oracle maps (video, perturbation) to per-frame importance scores.  Masking
is applied oracle-side from the declarative PerturbationSpec, because the
replacement function (black frames / black pixels) belongs with whatever
computes the features.  For feature-space-only oracles a masked frame is the
zero feature vector, which is the image of a black frame under mean-RGB
extraction; this is an approximation for arbitrary extractors.

All in-process oracles are pure: repeated calls on the same inputs are
byte-identical, and `score` delegates to the batched path so single and
batched evaluations share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .types import (
    NONE_SPEC,
    FrameFeatures,
    PerturbationSpec,
    ScoreSequence,
    ValidationError,
    VideoBundle,
)

_ATTENTION_CHUNK = 256  # masks scored per vectorized batch


class CapabilityError(RuntimeError):
    """The oracle does not support the requested operation."""


class OracleError(RuntimeError):
    """An (external) oracle failed to produce a usable answer."""


@dataclass(frozen=True)
class OracleCapabilities:
    supports_fragment_masks: bool = False
    supports_object_masks: bool = False
    supports_attention: bool = False
    batch_limit: int = 1

    def __post_init__(self):
        if self.batch_limit < 1:
            raise ValidationError("capabilities: batch_limit must be >= 1")


@dataclass(frozen=True)
class AttentionDiagonal:
    """Per-frame self-attention weights A_ii."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or not np.isfinite(weights).all():
            raise ValidationError("attention diagonal: expected finite 1-d weights")
        weights = weights.copy()
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]


class Oracle:
    """Base class; subclasses set `capabilities` and implement `_score_batch`."""

    capabilities: OracleCapabilities = OracleCapabilities()

    def score(self, bundle: VideoBundle, spec: PerturbationSpec = NONE_SPEC) -> ScoreSequence:
        return ScoreSequence(self.score_many(bundle, [spec])[0])

    def score_many(self, bundle: VideoBundle, specs: Sequence[PerturbationSpec]) -> np.ndarray:
        """Score a batch of perturbations; returns raw (len(specs), n_frames) float64.

        The raw array avoids per-spec ScoreSequence overhead in tight
        perturbation loops; `score` wraps single results.
        """
        specs = list(specs)
        for spec in specs:
            self.check_spec(bundle, spec)
        out = self._score_batch(bundle, specs)
        if out.shape != (len(specs), bundle.n_frames):
            raise OracleError(
                f"oracle returned shape {out.shape}, expected {(len(specs), bundle.n_frames)}"
            )
        return out

    def attention_diagonal(self, bundle: VideoBundle) -> AttentionDiagonal:
        if not self.capabilities.supports_attention:
            raise CapabilityError(f"{type(self).__name__} does not expose attention")
        diag = AttentionDiagonal(self._attention(bundle))
        if len(diag) != bundle.n_frames:
            raise OracleError(
                f"attention diagonal has {len(diag)} entries for {bundle.n_frames} frames"
            )
        return diag

    def check_spec(self, bundle: VideoBundle, spec: PerturbationSpec) -> None:
        caps = self.capabilities
        if spec.kind == "fragments":
            if not caps.supports_fragment_masks:
                raise CapabilityError(f"{type(self).__name__} does not support fragment masks")
            n = len(bundle.fragmentation)
            if any(k < 0 or k >= n for k in spec.masked_fragments):
                raise ValidationError(
                    f"fragment mask {sorted(spec.masked_fragments)} out of range for "
                    f"{n} fragments"
                )
        elif spec.kind == "objects":
            if not caps.supports_object_masks:
                raise CapabilityError(f"{type(self).__name__} does not support object masks")
            if bundle.segmentation is None:
                raise ValidationError("object masking requires segmentation maps")
            n = len(bundle.fragmentation)
            if not (0 <= spec.target_fragment < n):
                raise ValidationError(
                    f"target fragment {spec.target_fragment} out of range for {n} fragments"
                )

    def _score_batch(self, bundle: VideoBundle, specs: list[PerturbationSpec]) -> np.ndarray:
        raise NotImplementedError

    def _attention(self, bundle: VideoBundle) -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        """Release whatever the oracle holds; in-process oracles hold nothing."""


def _keep_matrix(bundle: VideoBundle, specs: list[PerturbationSpec]) -> np.ndarray:
    """(m, n_frames) float64 of 1 = frame present, 0 = frame masked."""
    keep = np.ones((len(specs), bundle.n_frames))
    for row, spec in enumerate(specs):
        if spec.kind == "fragments":
            for k in spec.masked_fragments:
                keep[row, bundle.fragmentation[k].frame_slice] = 0.0
    return keep


class LinearMaskOracle(Oracle):
    """Test oracle, exactly linear in the fragment-mask indicator.

    Every frame scores base - sum of the masked fragments' weights, clamped
    to [0, 1].
    """

    capabilities = OracleCapabilities(supports_fragment_masks=True, batch_limit=1 << 16)

    def __init__(self, base: float, fragment_weights: Sequence[float]):
        weights = np.asarray(fragment_weights, dtype=np.float64)
        if weights.ndim != 1 or not np.isfinite(weights).all() or not np.isfinite(base):
            raise ValidationError("linear oracle: base and weights must be finite")
        self.base = float(base)
        self.fragment_weights = weights

    def _score_batch(self, bundle, specs):
        if len(bundle.fragmentation) != len(self.fragment_weights):
            raise ValidationError(
                f"dimension mismatch: oracle has {len(self.fragment_weights)} fragment "
                f"weights, video has {len(bundle.fragmentation)} fragments"
            )
        out = np.empty((len(specs), bundle.n_frames))
        for row, spec in enumerate(specs):
            drop = sum(self.fragment_weights[k] for k in spec.masked_fragments)
            out[row] = min(1.0, max(0.0, self.base - drop))
        return out


class ToyAttentionScorer(Oracle):
    """Self-attention toy standing in for attention-based summarizers.

    A = row-softmax(F F^T / sqrt(dim)) on the (possibly perturbed) features;
    frame i scores sum_j A_ij * s_j with s_j the frame's L2 norm divided by
    the video's max norm (0 if all norms are 0).  Fragment masks zero the
    masked frames' feature rows.
    """

    capabilities = OracleCapabilities(
        supports_fragment_masks=True, supports_attention=True, batch_limit=1 << 16
    )

    def _score_batch(self, bundle, specs):
        f = bundle.features.data.astype(np.float64)
        keep = _keep_matrix(bundle, specs)
        out = np.empty((len(specs), bundle.n_frames))
        for lo in range(0, len(specs), _ATTENTION_CHUNK):
            hi = min(lo + _ATTENTION_CHUNK, len(specs))
            fm = f[None, :, :] * keep[lo:hi, :, None]
            attn = _row_softmax(fm @ fm.transpose(0, 2, 1) / np.sqrt(f.shape[1]))
            norms = np.linalg.norm(fm, axis=2)
            max_norm = norms.max(axis=1, keepdims=True)
            s = np.divide(norms, max_norm, out=np.zeros_like(norms), where=max_norm > 0)
            out[lo:hi] = (attn @ s[:, :, None])[:, :, 0]
        return out

    def _attention(self, bundle):
        f = bundle.features.data.astype(np.float64)
        attn = _row_softmax((f @ f.T / np.sqrt(f.shape[1]))[None])[0]
        return np.diagonal(attn).copy()


def _row_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SmoothedNormScorer(Oracle):
    """Frame score = smoothed, normalized feature energy.

    Masked frames' features are zeroed, per-frame L2 norms are divided by the
    max norm of the *unperturbed* video (all-zero videos score 0), and the
    result is smoothed by a centered moving average of window 5, truncated at
    the sequence edges.  The wire-protocol reference adapter implements the
    same model, so cross-process runs agree.
    """

    capabilities = OracleCapabilities(supports_fragment_masks=True, batch_limit=1 << 16)

    SMOOTHING_WINDOW = 5

    def _score_batch(self, bundle, specs):
        base_norms = np.linalg.norm(bundle.features.data.astype(np.float64), axis=1)
        base_max = base_norms.max()
        if base_max == 0.0:
            return np.zeros((len(specs), bundle.n_frames))
        x = _keep_matrix(bundle, specs) * (base_norms / base_max)[None, :]
        return smooth_window5(x)


def smooth_window5(x: np.ndarray) -> np.ndarray:
    """Centered moving average, window 5, truncated at the edges (last axis)."""
    acc = x.astype(np.float64).copy()
    count = np.ones(x.shape[-1])
    for off in (1, 2):
        acc[..., off:] += x[..., :-off]
        count[off:] += 1
        acc[..., :-off] += x[..., off:]
        count[:-off] += 1
    return acc / count


class MeanFeatureScorer(Oracle):
    """Frame score = mean feature value, clipped to [0, 1]; masked frames zero."""

    capabilities = OracleCapabilities(supports_fragment_masks=True, batch_limit=1 << 16)

    def _score_batch(self, bundle, specs):
        base = bundle.features.data.astype(np.float64).mean(axis=1)
        return np.clip(_keep_matrix(bundle, specs) * base[None, :], 0.0, 1.0)


# A frame extractor maps uint8 RGB frames (k, h, w, 3) to float32 rows (k, dim)
# and must be per-frame pure: row i depends only on frame i.
FrameExtractor = Callable[[np.ndarray], np.ndarray]

GRID_CELLS = 4  # 4x4 mean-RGB grid -> 48 feature dims
GRID_EXTRACTOR_DIM = GRID_CELLS * GRID_CELLS * 3


def grid_mean_rgb_extractor(frames: np.ndarray) -> np.ndarray:
    """Mean RGB of a 4x4 cell grid per frame, scaled to [0, 1]; dim = 48."""
    frames = np.asarray(frames)
    k, h, w, _ = frames.shape
    rows = np.array_split(np.arange(h), GRID_CELLS)
    cols = np.array_split(np.arange(w), GRID_CELLS)
    cells = []
    for r in rows:
        for c in cols:
            block = frames[:, r[0] : r[-1] + 1, c[0] : c[-1] + 1, :]
            cells.append(block.astype(np.float64).mean(axis=(1, 2)) / 255.0)
    return np.concatenate(cells, axis=1).astype(np.float32)


class PixelOracle(Oracle):
    """Composes pixel-space perturbation, feature extraction and an inner scorer.

    Object masks blacken the selected pixels across every frame of the target
    fragment before extraction; fragment masks blacken whole frames.  The
    inner oracle then scores the re-extracted features unperturbed.
    """

    def __init__(self, extractor: FrameExtractor = grid_mean_rgb_extractor, inner: Oracle | None = None):
        self.extractor = extractor
        self.inner = inner if inner is not None else SmoothedNormScorer()
        self.capabilities = OracleCapabilities(
            supports_fragment_masks=True,
            supports_object_masks=True,
            supports_attention=self.inner.capabilities.supports_attention,
            batch_limit=self.inner.capabilities.batch_limit,
        )

    def _feature_bundle(self, bundle: VideoBundle, rows: np.ndarray) -> VideoBundle:
        return replace(bundle, features=FrameFeatures(rows), frames=None, segmentation=None)

    def _require_frames(self, bundle: VideoBundle) -> np.ndarray:
        if bundle.frames is None:
            raise ValidationError("pixel oracle requires raw frames")
        return bundle.frames

    def _score_batch(self, bundle, specs):
        frames = self._require_frames(bundle)
        baseline = self.extractor(frames)
        black_row = self.extractor(np.zeros((1,) + frames.shape[1:], dtype=np.uint8))[0]
        out = np.empty((len(specs), bundle.n_frames))
        for row, spec in enumerate(specs):
            if spec.kind == "none":
                feats = baseline
            elif spec.kind == "fragments":
                feats = baseline.copy()
                for k in spec.masked_fragments:
                    feats[bundle.fragmentation[k].frame_slice] = black_row
            else:
                frag = bundle.fragmentation[spec.target_fragment]
                patch = np.array(frames[frag.frame_slice])
                labels = bundle.segmentation.labels[frag.frame_slice]
                hit = np.isin(labels, sorted(spec.masked_objects))
                patch[hit] = 0
                feats = baseline.copy()
                feats[frag.frame_slice] = self.extractor(patch)
            inner_bundle = self._feature_bundle(bundle, feats)
            out[row] = self.inner.score_many(inner_bundle, [NONE_SPEC])[0]
        return out

    def _attention(self, bundle):
        frames = self._require_frames(bundle)
        inner_bundle = self._feature_bundle(bundle, self.extractor(frames))
        return self.inner.attention_diagonal(inner_bundle).weights
