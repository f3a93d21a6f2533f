import numpy as np
import pytest

from xsumx.object_explainer import (
    ExplanationSkipped,
    FragmentSelection,
    enumerate_objects,
    lime_object_explain,
    object_explanation_from_json,
    object_explanation_to_json,
    render_overlay,
    select_fragments_by_summarizer,
    select_keyframe,
)
from xsumx.oracle import Oracle, OracleCapabilities
from xsumx.surrogate import LimeConfig
from xsumx.types import (
    Fragment,
    Fragmentation,
    FrameFeatures,
    ScoreSequence,
    SegmentationMaps,
    ValidationError,
    VideoBundle,
)

from conftest import equal_fragmentation, make_bundle


def banded_segmentation(n_frames=6, ids=(1, 4, 7), h=6, w=6) -> SegmentationMaps:
    labels = np.zeros((h, w), dtype=np.uint16)
    bands = np.array_split(np.arange(h), len(ids))
    for band, obj in zip(bands, ids):
        labels[band[0] : band[-1] + 1, :] = obj
    return SegmentationMaps(np.broadcast_to(labels, (n_frames, h, w)).copy())


class ObjectLinearOracle(Oracle):
    """Constant frame score, exactly linear in the object-mask indicator."""

    capabilities = OracleCapabilities(
        supports_fragment_masks=True, supports_object_masks=True, batch_limit=1 << 16
    )

    def __init__(self, base: float, object_weights: dict[int, float]):
        self.base = base
        self.object_weights = object_weights

    def _score_batch(self, bundle, specs):
        out = np.empty((len(specs), bundle.n_frames))
        for row, spec in enumerate(specs):
            value = self.base
            if spec.kind == "objects":
                value -= sum(self.object_weights.get(i, 0.0) for i in spec.masked_objects)
            out[row] = value
        return out


class GarbageOutsideFragment(Oracle):
    """Inner scores inside the fragment, per-spec pseudo-noise everywhere else."""

    def __init__(self, inner, fragment_index):
        self.inner = inner
        self.fragment_index = fragment_index
        self.capabilities = inner.capabilities

    def _score_batch(self, bundle, specs):
        out = self.inner._score_batch(bundle, specs)
        frag = bundle.fragmentation[self.fragment_index]
        for row, spec in enumerate(specs):
            rng = np.random.default_rng(abs(hash((spec.kind, tuple(sorted(spec.masked_objects))))) % 2**32)
            junk = rng.uniform(0, 1, bundle.n_frames)
            junk[frag.frame_slice] = out[row, frag.frame_slice]
            out[row] = junk
        return out


def make_object_bundle(baseline_peak_frame=1):
    seg = banded_segmentation()
    bundle = make_bundle(n_fragments=2, frames_per_fragment=3, segmentation=seg, seed=8)
    return bundle


def test_select_fragments_by_summarizer_sorts_means():
    frag = equal_fragmentation(4, 2)
    scores = ScoreSequence(np.repeat([0.3, 0.8, 0.5, 0.9], 2))
    sel = select_fragments_by_summarizer(scores, frag, k=3)
    assert sel.fragment_indices == (3, 1, 2)
    assert sel.source == "from_summarizer"


def test_select_fragments_ties_by_index():
    frag = equal_fragmentation(4, 2)
    sel = select_fragments_by_summarizer(ScoreSequence(np.full(8, 0.5)), frag, k=3)
    assert sel.fragment_indices == (0, 1, 2)


def test_select_fragments_truncates():
    frag = equal_fragmentation(2, 2)
    sel = select_fragments_by_summarizer(ScoreSequence(np.array([0.1, 0.1, 0.9, 0.9])), frag, k=3)
    assert sel.fragment_indices == (1, 0)


def test_selection_rejects_duplicates():
    with pytest.raises(ValidationError):
        FragmentSelection("from_summarizer", (1, 1))


def test_select_keyframe_earliest_tie():
    assert select_keyframe(ScoreSequence(np.array([0.1, 0.9, 0.9])), Fragment(0, 2)) == 1


def test_select_keyframe_single_frame():
    assert select_keyframe(ScoreSequence(np.array([0.1, 0.9, 0.9])), Fragment(2, 2)) == 2


def test_select_keyframe_matches_linear_scan():
    rng = np.random.default_rng(23)
    scores = ScoreSequence(rng.uniform(0, 1, 30))
    frag = Fragment(4, 27)
    best, best_idx = -1.0, None
    for i in range(frag.start, frag.end + 1):
        if scores.scores[i] > best:
            best, best_idx = scores.scores[i], i
    assert select_keyframe(scores, frag) == best_idx


def test_enumerate_objects_sorted_nonzero():
    seg = banded_segmentation(ids=(7, 1, 4))
    assert enumerate_objects(seg, 0) == [1, 4, 7]


def test_enumerate_objects_void_only():
    seg = SegmentationMaps(np.zeros((3, 4, 4), dtype=np.uint16))
    assert enumerate_objects(seg, 1) == []


def test_enumerate_objects_area_filter():
    labels = np.zeros((10, 10), dtype=np.uint16)
    labels[0, :2] = 3  # 2 of 100 pixels
    labels[5:, :] = 8
    seg = SegmentationMaps(labels[None])
    assert enumerate_objects(seg, 0, min_area_fraction=0.05) == [8]
    assert enumerate_objects(seg, 0, min_area_fraction=0.0) == [3, 8]


def test_object_lime_recovers_planted_weights():
    bundle = make_object_bundle()
    oracle = ObjectLinearOracle(0.7, {1: 0.25, 4: 0.05, 7: -0.1})
    expl = lime_object_explain(oracle, bundle, 0, LimeConfig(ridge_lambda=0.0))
    assert expl.object_ids == (1, 4, 7)
    np.testing.assert_allclose(expl.weights, [0.25, 0.05, -0.1], atol=1e-9)
    assert expl.ranking == (1, 4, 7)
    assert expl.top == (1, 4, 7)
    assert expl.bottom == (7, 4, 1)
    assert expl.n_perturbations == 8  # exhaustive: 2^3 <= 2000
    assert expl.fragment_index == 0
    assert 0 <= expl.keyframe_index <= 2


def test_object_lime_target_ignores_frames_outside_fragment():
    bundle = make_object_bundle()
    inner = ObjectLinearOracle(0.7, {1: 0.25, 4: 0.05, 7: -0.1})
    clean = lime_object_explain(inner, bundle, 0, LimeConfig(ridge_lambda=0.0))
    noisy = lime_object_explain(
        GarbageOutsideFragment(inner, 0), bundle, 0, LimeConfig(ridge_lambda=0.0)
    )
    np.testing.assert_allclose(noisy.weights, clean.weights, atol=1e-12)
    assert noisy.ranking == clean.ranking


def test_object_lime_skips_single_object():
    seg = SegmentationMaps(np.full((6, 4, 4), 5, dtype=np.uint16))
    bundle = make_bundle(n_fragments=2, frames_per_fragment=3, segmentation=seg)
    oracle = ObjectLinearOracle(0.7, {5: 0.1})
    with pytest.raises(ExplanationSkipped, match="1 object"):
        lime_object_explain(oracle, bundle, 0)


def test_object_lime_skips_void_keyframe():
    seg = SegmentationMaps(np.zeros((6, 4, 4), dtype=np.uint16))
    bundle = make_bundle(n_fragments=2, frames_per_fragment=3, segmentation=seg)
    with pytest.raises(ExplanationSkipped, match="0 object"):
        lime_object_explain(ObjectLinearOracle(0.7, {}), bundle, 0)


def test_object_lime_skips_without_segmentation():
    bundle = make_bundle(n_fragments=2, frames_per_fragment=3)
    with pytest.raises(ExplanationSkipped, match="no segmentation"):
        lime_object_explain(ObjectLinearOracle(0.7, {}), bundle, 0)


def test_object_lime_two_objects_top_bottom_overlap():
    seg = banded_segmentation(ids=(2, 9))
    bundle = make_bundle(n_fragments=2, frames_per_fragment=3, segmentation=seg)
    oracle = ObjectLinearOracle(0.6, {2: 0.3, 9: 0.1})
    expl = lime_object_explain(oracle, bundle, 1, LimeConfig(ridge_lambda=0.0))
    assert expl.ranking == (2, 9)
    assert expl.top == (2, 9)
    assert expl.bottom == (9, 2)


def test_object_explanation_json_round_trip():
    bundle = make_object_bundle()
    oracle = ObjectLinearOracle(0.7, {1: 0.25, 4: 0.05, 7: -0.1})
    expl = lime_object_explain(oracle, bundle, 0, LimeConfig(ridge_lambda=0.0))
    text = object_explanation_to_json(expl)
    back = object_explanation_from_json(text)
    assert back == expl
    assert object_explanation_to_json(back) == text


def test_overlay_empty_sets_is_identity():
    rng = np.random.default_rng(1)
    frame = rng.integers(0, 256, size=(6, 6, 3)).astype(np.uint8)
    labels = banded_segmentation().labels[0]
    out = render_overlay(frame, labels, [], [])
    np.testing.assert_array_equal(out, frame)


def test_overlay_blends_exactly_claimed_pixels():
    rng = np.random.default_rng(2)
    frame = rng.integers(0, 256, size=(5, 5, 3)).astype(np.uint8)
    labels = np.zeros((5, 5), dtype=np.uint16)
    labels[0, :5] = 3
    labels[1, :5] = 6
    out = render_overlay(frame, labels, [3], [6])
    green = np.rint(0.5 * frame[0].astype(float) + 0.5 * np.array([0, 255, 0])).astype(np.uint8)
    red = np.rint(0.5 * frame[1].astype(float) + 0.5 * np.array([255, 0, 0])).astype(np.uint8)
    np.testing.assert_array_equal(out[0], green)
    np.testing.assert_array_equal(out[1], red)
    np.testing.assert_array_equal(out[2:], frame[2:])
    changed = np.argwhere((out != frame).any(axis=2))
    assert set(map(tuple, changed)) <= set(map(tuple, np.argwhere(np.isin(labels, [3, 6]))))


def test_overlay_collision_top_wins_with_finding():
    frame = np.full((4, 4, 3), 100, dtype=np.uint8)
    labels = np.full((4, 4), 2, dtype=np.uint16)
    findings = []
    out = render_overlay(frame, labels, [2], [2], findings)
    assert len(findings) == 1 and "both top and bottom" in findings[0]
    expected = np.rint(0.5 * 100 + 0.5 * np.array([0, 255, 0])).astype(np.uint8)
    np.testing.assert_array_equal(out[0, 0], expected)


def test_overlay_shape_mismatch():
    with pytest.raises(ValidationError):
        render_overlay(
            np.zeros((4, 4, 3), dtype=np.uint8), np.zeros((5, 5), dtype=np.uint16), [1], []
        )
