"""Object-level explanations over a selected fragment.

Pipeline per fragment: pick the top-scoring frame as the keyframe, enumerate
its visual objects from the segmentation maps, run the surrogate fit over
object masks applied across the whole fragment, and report the top/bottom
objects.  Overlays paint top objects green and bottom objects red.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fragmentation import fragment_scores
from .oracle import Oracle
from .surrogate import (
    OBJECT_PERTURBATIONS,
    TOP_K,
    LimeConfig,
    fit_weighted_ridge,
    kernel_weights,
    rank_items,
    sample_masks,
)
from .types import (
    NONE_SPEC,
    Fragment,
    Fragmentation,
    PerturbationSpec,
    ScoreSequence,
    SegmentationMaps,
    ValidationError,
    VideoBundle,
    VOID_ID,
)

GREEN = np.array([0, 255, 0], dtype=np.float64)
RED = np.array([255, 0, 0], dtype=np.float64)
BLEND = 0.5


class ExplanationSkipped(Exception):
    """This video/fragment cannot be explained; `.finding` says why."""

    def __init__(self, finding: str):
        super().__init__(finding)
        self.finding = finding


@dataclass(frozen=True)
class FragmentSelection:
    source: str  # "from_explanation" | "from_summarizer"
    fragment_indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.fragment_indices)) != len(self.fragment_indices):
            raise ValidationError("fragment selection: indices must be distinct")


@dataclass(frozen=True)
class ObjectExplanation:
    video_id: str
    fragment_index: int
    keyframe_index: int
    object_ids: tuple[int, ...]  # ascending, the mask bit order
    weights: tuple[float, ...]  # aligned with object_ids
    ranking: tuple[int, ...]  # object IDs by weight descending
    top: tuple[int, ...]
    bottom: tuple[int, ...]
    r2: float
    n_perturbations: int
    config: Optional[LimeConfig] = None

    @property
    def object_weights(self) -> dict[int, float]:
        return dict(zip(self.object_ids, self.weights))


def select_fragments_by_summarizer(
    baseline: ScoreSequence, frag: Fragmentation, k: int = TOP_K
) -> FragmentSelection:
    """Top-k fragments by mean frame score; ties go to the lower index."""
    means = fragment_scores(baseline, frag)
    order = rank_items(means)
    return FragmentSelection(
        source="from_summarizer",
        fragment_indices=tuple(int(i) for i in order[: min(k, len(frag))]),
    )


def select_keyframe(baseline: ScoreSequence, fragment: Fragment) -> int:
    """Index of the top-scoring frame inside the fragment; earliest wins ties."""
    window = baseline.scores[fragment.frame_slice]
    return fragment.start + int(np.argmax(window))


def enumerate_objects(
    seg: SegmentationMaps, keyframe: int, min_area_fraction: float = 0.0
) -> list[int]:
    """Distinct non-void object IDs in the keyframe, ascending.

    IDs covering less than `min_area_fraction` of the frame are dropped
    (defaults to keeping everything).
    """
    if not (0 <= keyframe < seg.n_frames):
        raise ValidationError(f"keyframe {keyframe} out of range for {seg.n_frames} frames")
    ids, counts = np.unique(seg.labels[keyframe], return_counts=True)
    keep = (ids != VOID_ID) & (counts >= min_area_fraction * seg.height * seg.width)
    return [int(i) for i in ids[keep]]


def object_masks_to_specs(
    masks: np.ndarray, object_ids: list[int], fragment_index: int
) -> list[PerturbationSpec]:
    specs = []
    for row in masks:
        zeros = np.flatnonzero(row == 0)
        if zeros.size == 0:
            specs.append(NONE_SPEC)
        else:
            specs.append(
                PerturbationSpec.for_objects(fragment_index, (object_ids[z] for z in zeros))
            )
    return specs


def lime_object_explain(
    oracle: Oracle,
    bundle: VideoBundle,
    fragment_index: int,
    cfg: Optional[LimeConfig] = None,
    min_area_fraction: float = 0.0,
) -> ObjectExplanation:
    """Surrogate fit over keyframe-object masks applied across the fragment.

    The target is the mean score over the fragment's frames only.  Raises
    ExplanationSkipped when the keyframe shows fewer than two objects.
    """
    if cfg is None:
        cfg = LimeConfig(num_perturbations=OBJECT_PERTURBATIONS)
    if bundle.segmentation is None:
        raise ExplanationSkipped(f"{bundle.video_id}: no segmentation maps, objects skipped")
    fragment = bundle.fragmentation[fragment_index]
    baseline = oracle.score(bundle, NONE_SPEC)
    keyframe = select_keyframe(baseline, fragment)
    object_ids = enumerate_objects(bundle.segmentation, keyframe, min_area_fraction)
    if len(object_ids) < 2:
        raise ExplanationSkipped(
            f"{bundle.video_id}: keyframe {keyframe} of fragment {fragment_index} shows "
            f"{len(object_ids)} object(s), need at least 2"
        )
    masks = sample_masks(len(object_ids), cfg)
    scores = oracle.score_many(bundle, object_masks_to_specs(masks, object_ids, fragment_index))
    targets = scores[:, fragment.frame_slice].mean(axis=1)
    coef, _, r2 = fit_weighted_ridge(
        masks,
        targets,
        kernel_weights(masks, cfg),
        cfg.ridge_lambda,
        item_name="object",
        item_labels=object_ids,
    )
    order = rank_items(coef)
    ranking = tuple(object_ids[i] for i in order)
    k = min(TOP_K, len(ranking))
    return ObjectExplanation(
        video_id=bundle.video_id,
        fragment_index=fragment_index,
        keyframe_index=keyframe,
        object_ids=tuple(object_ids),
        weights=tuple(float(w) for w in coef),
        ranking=ranking,
        top=ranking[:k],
        bottom=tuple(reversed(ranking))[:k],
        r2=r2,
        n_perturbations=masks.shape[0],
        config=cfg,
    )


def render_overlay(
    frame: np.ndarray,
    labels: np.ndarray,
    top_ids,
    bottom_ids,
    findings: Optional[list[str]] = None,
) -> np.ndarray:
    """Blend top objects with green and bottom objects with red at factor 0.5.

    Pixels outside the top/bottom objects are returned unchanged.  An ID
    claimed by both sides is painted green and reported as a finding.
    """
    frame = np.asarray(frame, dtype=np.uint8)
    labels = np.asarray(labels)
    if frame.shape[:2] != labels.shape:
        raise ValidationError(
            f"overlay: frame {frame.shape[:2]} and labels {labels.shape} disagree"
        )
    top_ids = [int(i) for i in top_ids]
    bottom_ids = [int(i) for i in bottom_ids]
    collisions = sorted(set(top_ids) & set(bottom_ids))
    if collisions and findings is not None:
        findings.append(
            f"overlay: object(s) {collisions} claimed as both top and bottom; painted green"
        )
    bottom_only = [i for i in bottom_ids if i not in collisions]

    out = frame.astype(np.float64)
    for ids, color in ((top_ids, GREEN), (bottom_only, RED)):
        if not ids:
            continue
        hit = np.isin(labels, ids)
        out[hit] = np.rint((1.0 - BLEND) * out[hit] + BLEND * color)
    return out.astype(np.uint8)


def object_explanation_to_json(expl: ObjectExplanation) -> str:
    doc = {
        "video_id": expl.video_id,
        "fragment_index": expl.fragment_index,
        "keyframe_index": expl.keyframe_index,
        "object_weights": {str(i): w for i, w in zip(expl.object_ids, expl.weights)},
        "ranking": list(expl.ranking),
        "top": list(expl.top),
        "bottom": list(expl.bottom),
        "config_echo": expl.config.echo() if expl.config is not None else None,
        "r2": expl.r2,
        "n_perturbations": expl.n_perturbations,
    }
    return json.dumps(doc, indent=2) + "\n"


def object_explanation_from_json(text: str) -> ObjectExplanation:
    doc = json.loads(text)
    ids = tuple(sorted(int(i) for i in doc["object_weights"]))
    weights = tuple(doc["object_weights"][str(i)] for i in ids)
    cfg = LimeConfig(**doc["config_echo"]) if doc.get("config_echo") else None
    return ObjectExplanation(
        video_id=doc["video_id"],
        fragment_index=doc["fragment_index"],
        keyframe_index=doc["keyframe_index"],
        object_ids=ids,
        weights=weights,
        ranking=tuple(doc["ranking"]),
        top=tuple(doc["top"]),
        bottom=tuple(doc["bottom"]),
        r2=doc["r2"],
        n_perturbations=doc["n_perturbations"],
        config=cfg,
    )
