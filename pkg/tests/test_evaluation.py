import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from xsumx.evaluation import (
    DeltaScope,
    WHOLE_VIDEO,
    delta_e,
    discoverability,
    evaluate_corpus,
    kendall_tau,
    render_report_text,
    report_to_json,
    sanity_violation,
)
from xsumx.fragment_explainer import FragmentExplanation, lime_fragment_explain
from xsumx.oracle import LinearMaskOracle, Oracle
from xsumx.surrogate import LimeConfig
from xsumx.types import NONE_SPEC, PerturbationSpec, ValidationError

from conftest import make_bundle


def brute_force_tau_b(a, b):
    """O(n^2) pair counting, written independently of the library routine."""
    n = len(a)
    concordant = discordant = ties_a_only = ties_b_only = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = (a[i] > a[j]) - (a[i] < a[j])
            db = (b[i] > b[j]) - (b[i] < b[j])
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a_only += 1
            elif db == 0:
                ties_b_only += 1
            elif da == db:
                concordant += 1
            else:
                discordant += 1
    cd = concordant + discordant
    denom_sq = (cd + ties_a_only) * (cd + ties_b_only)
    if denom_sq == 0:
        return 0.0
    return (concordant - discordant) / math.sqrt(denom_sq)


class IndexRampLinear(LinearMaskOracle):
    """Linear mask oracle plus a tiny per-frame ramp, so frames never tie."""

    def _score_batch(self, bundle, specs):
        base = super()._score_batch(bundle, specs)
        return base + 0.001 * np.arange(bundle.n_frames)[None, :]


class RecordingOracle(Oracle):
    """Remembers every spec it was asked to score."""

    def __init__(self, inner):
        self.inner = inner
        self.capabilities = inner.capabilities
        self.seen = []

    def _score_batch(self, bundle, specs):
        self.seen.extend(specs)
        return self.inner._score_batch(bundle, specs)


def test_tau_identity():
    assert kendall_tau([1.0, 2.0, 3.0], [1.0, 2.0, 3.0]) == 1.0


def test_tau_reversal():
    assert kendall_tau([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == -1.0


def test_tau_constant_is_degenerate_zero():
    findings = []
    assert kendall_tau([1.0, 1.0, 1.0], [1.0, 2.0, 3.0], findings) == 0.0
    assert findings and "degenerate" in findings[0]


def test_tau_length_mismatch():
    with pytest.raises(ValidationError):
        kendall_tau([1.0, 2.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        kendall_tau([1.0], [2.0])


def test_tau_matches_brute_force_with_planted_ties():
    rng = np.random.default_rng(31)
    for _ in range(30):
        n = int(rng.integers(2, 51))
        a = rng.integers(0, 6, n).astype(float)  # coarse grid plants ties
        b = rng.integers(0, 6, n).astype(float)
        assert kendall_tau(a, b) == brute_force_tau_b(a.tolist(), b.tolist())


@given(
    st.lists(st.integers(min_value=-3, max_value=3), min_size=2, max_size=25),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=60, deadline=None)
def test_tau_properties(a_ints, seed):
    rng = np.random.default_rng(seed)
    a = np.array(a_ints, dtype=float)
    b = rng.integers(-3, 4, len(a)).astype(float)
    tau = kendall_tau(a, b)
    assert -1.0 <= tau <= 1.0
    assert tau == kendall_tau(b, a)
    # strictly increasing transforms leave the statistic untouched
    assert kendall_tau(np.exp(a), b) == pytest.approx(tau, abs=1e-12)
    assert tau == brute_force_tau_b(a.tolist(), b.tolist())


def test_delta_e_none_spec_is_one():
    bundle = make_bundle()
    oracle = IndexRampLinear(0.5, [0.0, 0.0, 0.0, 0.0])
    assert delta_e(oracle, bundle, NONE_SPEC) == 1.0


def test_delta_e_order_preserving_mask_is_one():
    bundle = make_bundle()
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.01])
    for k in range(4):
        assert delta_e(oracle, bundle, PerturbationSpec.for_fragments([k])) == 1.0


def test_delta_e_reversing_oracle_is_minus_one():
    class Reverser(Oracle):
        capabilities = LinearMaskOracle.capabilities

        def _score_batch(self, bundle, specs):
            n = bundle.n_frames
            out = np.empty((len(specs), n))
            for row, spec in enumerate(specs):
                ramp = 0.1 + 0.8 * np.arange(n) / n
                out[row] = ramp if spec.kind == "none" else ramp[::-1]
            return out

    bundle = make_bundle()
    assert delta_e(Reverser(), bundle, PerturbationSpec.for_fragments([0])) == -1.0


def test_delta_e_fragment_scope_restricts_frames():
    class FirstFragmentShuffler(Oracle):
        capabilities = LinearMaskOracle.capabilities

        def _score_batch(self, bundle, specs):
            n = bundle.n_frames
            out = np.tile(0.1 + 0.8 * np.arange(n) / n, (len(specs), 1))
            for row, spec in enumerate(specs):
                if spec.kind != "none":
                    out[row, :3] = out[row, :3][::-1]
            return out

    bundle = make_bundle()  # fragments of 3 frames
    spec = PerturbationSpec.for_fragments([0])
    assert delta_e(FirstFragmentShuffler(), bundle, spec, DeltaScope.fragment(0)) == -1.0
    assert delta_e(FirstFragmentShuffler(), bundle, spec, DeltaScope.fragment(1)) == 1.0


def test_discoverability_k1_modes_coincide():
    bundle = make_bundle()
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.01])
    ranking = [0, 1, 2, 3]
    for sign in ("plus", "minus"):
        one = discoverability(oracle, bundle, ranking, sign, "one_by_one", 1)
        seq = discoverability(oracle, bundle, ranking, sign, "sequential", 1)
        assert one == seq


def test_discoverability_insufficient_items_is_none():
    bundle = make_bundle()
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.01])
    assert discoverability(oracle, bundle, [0, 1], "plus", "one_by_one", 3) is None


def test_discoverability_sequential_masks_are_nested():
    bundle = make_bundle()
    recorder = RecordingOracle(IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.01]))
    ranking = [2, 0, 3, 1]
    previous = set()
    for k in (1, 2, 3):
        recorder.seen.clear()
        discoverability(recorder, bundle, ranking, "plus", "sequential", k)
        masks = [s.masked_fragments for s in recorder.seen if s.kind == "fragments"]
        assert len(masks) == 1
        assert masks[0] > previous or k == 1
        assert masks[0] == set(ranking[:k])
        previous = masks[0]


def test_discoverability_plus_sequential_non_increasing_on_energy_oracle():
    # masking ever-larger prefixes of the true ranking scrambles ever more
    from xsumx.oracle import SmoothedNormScorer
    from xsumx.synth import SynthConfig, generate_video
    from xsumx.types import VideoBundle

    video = generate_video(SynthConfig(seed=5), 0)
    bundle = VideoBundle(video["video_id"], video["features"], video["fragmentation"])
    oracle = SmoothedNormScorer()
    expl = lime_fragment_explain(oracle, bundle, LimeConfig())
    values = [
        discoverability(oracle, bundle, expl.ranking, "plus", "sequential", k)
        for k in (1, 2, 3)
    ]
    assert values[0] >= values[1] >= values[2]


def test_discoverability_minus_takes_items_from_the_bottom():
    bundle = make_bundle()
    recorder = RecordingOracle(IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.01]))
    ranking = [2, 0, 3, 1]
    discoverability(recorder, bundle, ranking, "minus", "one_by_one", 2)
    masks = [s.masked_fragments for s in recorder.seen if s.kind == "fragments"]
    assert masks == [{3}]  # second from the bottom
    recorder.seen.clear()
    discoverability(recorder, bundle, ranking, "minus", "sequential", 2)
    masks = [s.masked_fragments for s in recorder.seen if s.kind == "fragments"]
    assert masks == [{3, 1}]


def test_sanity_violation_counts():
    assert sanity_violation([(-0.5, 0.9)] * 4) == 0.0
    assert sanity_violation([(0.5, 0.5)] * 4) == 1.0  # equality violates
    pairs = [(0.2, 0.8)] * 7 + [(0.9, 0.1)] * 3
    assert sanity_violation(pairs) == pytest.approx(0.3)
    assert sanity_violation([]) is None
    assert sanity_violation([(None, 0.5), (0.4, None)]) is None


def _fragment_explanation(video_id, ranking):
    n = len(ranking)
    k = min(3, n)
    return FragmentExplanation(
        video_id=video_id,
        method="lime",
        weights=tuple(float(n - i) for i in range(n)),
        ranking=tuple(ranking),
        top=tuple(ranking[:k]),
        bottom=tuple(reversed(ranking))[:k],
        r2=1.0,
        n_perturbations=16,
    )


def test_evaluate_corpus_single_video_mean_is_value():
    bundle = make_bundle(n_fragments=6, frames_per_fragment=3)
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.02, 0.01, 0.005])
    expl = lime_fragment_explain(oracle, bundle, LimeConfig(ridge_lambda=0.0))
    report = evaluate_corpus(oracle, [bundle], [expl])
    cells = report.per_unit[bundle.video_id]
    tier1 = report.tiers[0]
    assert tier1.min_items == 1
    assert tier1.eligible_ids == (bundle.video_id,)
    assert tier1.mean_disc["disc_plus"][0] == cells["disc_plus"][0]
    assert tier1.ks == (1,)
    tier3 = report.tiers[1]
    assert tier3.eligible_ids == (bundle.video_id,)
    assert tier3.ks == (1, 2, 3)


def test_evaluate_corpus_tier_eligibility_by_ranking_size():
    bundle5 = make_bundle(n_fragments=5, frames_per_fragment=3, video_id="five")
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.02, 0.01])
    expl = _fragment_explanation("five", [0, 1, 2, 3, 4])
    report = evaluate_corpus(oracle, [bundle5], [expl])
    assert report.tiers[0].eligible_ids == ("five",)  # needs >= 2 items
    assert report.tiers[1].eligible_ids == ()  # needs >= 6 items
    # k=3 cells need 2k=6 items, so they are ineligible markers
    assert report.per_unit["five"]["disc_plus"][2] is None
    assert report.per_unit["five"]["disc_plus"][1] is not None


def test_evaluate_corpus_empty_is_error():
    with pytest.raises(ValidationError):
        evaluate_corpus(IndexRampLinear(0.5, [0.1]), [], [])


def test_report_json_round_trips_byte_identically():
    bundle = make_bundle(n_fragments=6, frames_per_fragment=3)
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.02, 0.01, 0.005])
    expl = lime_fragment_explain(oracle, bundle, LimeConfig(ridge_lambda=0.0))
    report = evaluate_corpus(oracle, [bundle], [expl])
    text = report_to_json(report)
    reparsed = json.dumps(json.loads(text), indent=2) + "\n"
    assert reparsed == text


def test_report_text_layout():
    bundle = make_bundle(n_fragments=6, frames_per_fragment=3)
    oracle = IndexRampLinear(0.6, [0.2, 0.1, 0.05, 0.02, 0.01, 0.005])
    expl = lime_fragment_explain(oracle, bundle, LimeConfig(ridge_lambda=0.0))
    table = render_report_text(evaluate_corpus(oracle, [bundle], [expl]))
    for column in (
        "Disc+ (↓)",
        "Disc+ Seq (↓)",
        "Disc- (↑)",
        "Disc- Seq (↑)",
        "SV (↓)",
        "SV Seq (↓)",
    ):
        assert column in table
    assert "Top/Bottom-1" in table and "Top/Bottom-3" in table
