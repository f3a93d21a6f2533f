"""Explanation quality measures and corpus-level reporting.

The influence of masked content is the rank correlation (tie-corrected
Kendall tau) between the oracle's baseline scores and its scores after the
mask.  Disc+ masks an explanation's top-ranked items and should drive the
correlation down; Disc- masks the bottom-ranked items and should leave it
high.  A sanity violation is a (unit, k) pair where Disc+ >= Disc-.

Reports carry two eligibility tiers: units whose ranking supports disjoint
top/bottom picks at k=1 (>= 2 items) and at k=3 (>= 6 items).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .fragment_explainer import FragmentExplanation
from .object_explainer import ObjectExplanation
from .oracle import Oracle
from .types import PerturbationSpec, ValidationError, VideoBundle

EVAL_KS = (1, 2, 3)
MODES = ("one_by_one", "sequential")
SIGNS = ("plus", "minus")


@dataclass(frozen=True)
class DeltaScope:
    """Which frames enter the correlation: the whole video or one fragment."""

    kind: str  # "whole_video" | "fragment_only"
    fragment_index: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("whole_video", "fragment_only"):
            raise ValidationError(f"delta scope: unknown kind {self.kind!r}")
        if self.kind == "fragment_only" and self.fragment_index is None:
            raise ValidationError("delta scope: fragment_only needs a fragment index")

    @staticmethod
    def whole_video() -> "DeltaScope":
        return DeltaScope("whole_video")

    @staticmethod
    def fragment(index: int) -> "DeltaScope":
        return DeltaScope("fragment_only", int(index))


WHOLE_VIDEO = DeltaScope.whole_video()


def kendall_tau(a, b, findings: Optional[list[str]] = None) -> float:
    """Tie-corrected Kendall rank correlation (the tau-b variant).

    (C - D) / sqrt((C + D + Ta) * (C + D + Tb)) over all index pairs, where
    Ta/Tb count pairs tied in exactly one sequence.  A constant input makes
    the statistic undefined; that returns 0 with a "degenerate" finding so
    corpus runs never abort.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ValidationError(f"kendall_tau: length mismatch {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n < 2:
        raise ValidationError("kendall_tau: need at least 2 entries")
    iu = np.triu_indices(n, 1)
    da = np.sign(a[:, None] - a[None, :])[iu]
    db = np.sign(b[:, None] - b[None, :])[iu]
    prod = da * db
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    ties_a_only = int(np.count_nonzero((da == 0) & (db != 0)))
    ties_b_only = int(np.count_nonzero((db == 0) & (da != 0)))
    cd = concordant + discordant
    denom_sq = (cd + ties_a_only) * (cd + ties_b_only)
    if denom_sq == 0:
        if findings is not None:
            findings.append("kendall_tau: degenerate (constant sequence), defined as 0")
        return 0.0
    return (concordant - discordant) / math.sqrt(denom_sq)


def _scoped(scores: np.ndarray, bundle: VideoBundle, scope: DeltaScope) -> np.ndarray:
    if scope.kind == "whole_video":
        return scores
    return scores[bundle.fragmentation[scope.fragment_index].frame_slice]


def delta_e(
    oracle: Oracle,
    bundle: VideoBundle,
    spec: PerturbationSpec,
    scope: DeltaScope = WHOLE_VIDEO,
    findings: Optional[list[str]] = None,
) -> float:
    """Kendall tau between baseline and post-perturbation scores in scope."""
    baseline = oracle.score(bundle).scores
    perturbed = oracle.score(bundle, spec).scores
    return kendall_tau(
        _scoped(baseline, bundle, scope), _scoped(perturbed, bundle, scope), findings
    )


def discoverability(
    oracle: Oracle,
    bundle: VideoBundle,
    ranking: Sequence[int],
    sign: str,
    mode: str,
    k: int,
    kind: str = "fragments",
    fragment_index: Optional[int] = None,
    scope: Optional[DeltaScope] = None,
    findings: Optional[list[str]] = None,
) -> Optional[float]:
    """Delta-E after masking the k-th (or first k) ranked items from one end.

    `sign` "plus" takes items from the top of the ranking, "minus" from the
    bottom.  Mode "one_by_one" masks exactly the k-th item; "sequential"
    masks items 1..k together, so its masks are nested in k.  Object rankings
    mask within `fragment_index` and are scored fragment-only.  Returns None
    when the ranking has fewer than k items.
    """
    if sign not in SIGNS or mode not in MODES:
        raise ValidationError(f"discoverability: bad sign/mode {sign!r}/{mode!r}")
    ranking = list(ranking)
    if k < 1 or len(ranking) < k:
        return None
    if sign == "plus":
        items = [ranking[k - 1]] if mode == "one_by_one" else ranking[:k]
    else:
        items = [ranking[-k]] if mode == "one_by_one" else ranking[-k:]
    if kind == "fragments":
        spec = PerturbationSpec.for_fragments(items)
        scope = scope if scope is not None else WHOLE_VIDEO
    elif kind == "objects":
        if fragment_index is None:
            raise ValidationError("discoverability: object ranking needs a fragment index")
        spec = PerturbationSpec.for_objects(fragment_index, items)
        scope = DeltaScope.fragment(fragment_index)
    else:
        raise ValidationError(f"discoverability: unknown item kind {kind!r}")
    return delta_e(oracle, bundle, spec, scope, findings)


def sanity_violation(pairs: Sequence[tuple[Optional[float], Optional[float]]]) -> Optional[float]:
    """Fraction of (Disc+, Disc-) pairs violating Disc+ < Disc-.

    Equality counts as a violation.  Pairs with a missing side are skipped;
    with no usable pair the statistic is undefined (None).
    """
    usable = [(dp, dm) for dp, dm in pairs if dp is not None and dm is not None]
    if not usable:
        return None
    return sum(1 for dp, dm in usable if dp >= dm) / len(usable)


@dataclass(frozen=True)
class EvalUnit:
    """One explanation to evaluate: a ranking over fragments or objects."""

    unit_id: str
    video_id: str
    kind: str  # "fragments" | "objects"
    ranking: tuple[int, ...]
    fragment_index: Optional[int] = None


def as_eval_unit(expl) -> EvalUnit:
    if isinstance(expl, FragmentExplanation):
        return EvalUnit(expl.video_id, expl.video_id, "fragments", tuple(expl.ranking))
    if isinstance(expl, ObjectExplanation):
        return EvalUnit(
            f"{expl.video_id}#frag{expl.fragment_index}",
            expl.video_id,
            "objects",
            tuple(expl.ranking),
            expl.fragment_index,
        )
    raise ValidationError(f"cannot evaluate object of type {type(expl).__name__}")


@dataclass(frozen=True)
class TierSummary:
    min_items: int  # per end; a unit is eligible with >= 2*min_items ranked items
    eligible_ids: tuple[str, ...]
    ks: tuple[int, ...]
    mean_disc: Mapping[str, tuple[Optional[float], ...]]  # per measure, indexed by k
    sv: Optional[float]
    sv_seq: Optional[float]


@dataclass(frozen=True)
class EvaluationReport:
    per_unit: Mapping[str, Mapping[str, tuple[Optional[float], ...]]]
    tiers: tuple[TierSummary, ...]
    findings: tuple[str, ...]


_MEASURES = ("disc_plus", "disc_plus_seq", "disc_minus", "disc_minus_seq")


def _unit_cells(oracle, bundle, unit, ks, findings):
    cells: dict[str, list[Optional[float]]] = {m: [] for m in _MEASURES}
    for k in ks:
        eligible = len(unit.ranking) >= 2 * k
        for sign, mode, measure in (
            ("plus", "one_by_one", "disc_plus"),
            ("plus", "sequential", "disc_plus_seq"),
            ("minus", "one_by_one", "disc_minus"),
            ("minus", "sequential", "disc_minus_seq"),
        ):
            value = (
                discoverability(
                    oracle,
                    bundle,
                    unit.ranking,
                    sign,
                    mode,
                    k,
                    kind=unit.kind,
                    fragment_index=unit.fragment_index,
                    findings=findings,
                )
                if eligible
                else None
            )
            cells[measure].append(value)
    return cells


def evaluate_corpus(
    oracles,
    bundles: Sequence[VideoBundle],
    explanations: Sequence,
    ks: Sequence[int] = EVAL_KS,
    workers: int = 1,
) -> EvaluationReport:
    """Disc+/Disc- at each k for every explanation, aggregated per tier.

    `oracles` is a single oracle for the whole corpus or a mapping from
    video_id.  A unit contributes to a k cell only when its ranking holds at
    least 2k items, so top-k and bottom-k never overlap; tier SV pools the
    (unit, k) pairs of that tier's rows.  Units evaluate independently
    (optionally in `workers` threads); aggregation is a single-threaded
    reduction in unit order, so results never depend on scheduling.
    """
    if not explanations:
        raise ValidationError("evaluate_corpus: no explanations given")
    by_video = {b.video_id: b for b in bundles}
    units = [as_eval_unit(e) for e in explanations]
    for unit in units:
        if unit.video_id not in by_video:
            raise ValidationError(f"evaluate_corpus: no bundle for video {unit.video_id!r}")

    unit_findings: dict[str, list[str]] = {u.unit_id: [] for u in units}

    def evaluate_unit(unit):
        oracle = oracles[unit.video_id] if isinstance(oracles, Mapping) else oracles
        return _unit_cells(
            oracle, by_video[unit.video_id], unit, ks, unit_findings[unit.unit_id]
        )

    per_unit: dict[str, dict[str, list[Optional[float]]]] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for unit, cells in zip(units, pool.map(evaluate_unit, units)):
                per_unit[unit.unit_id] = cells
    else:
        for unit in units:
            per_unit[unit.unit_id] = evaluate_unit(unit)
    findings = [f for unit in units for f in unit_findings[unit.unit_id]]

    tiers = []
    for min_items in (1, 3):
        tier_ks = tuple(k for k in ks if k <= min_items)
        eligible = [u.unit_id for u in units if len(u.ranking) >= 2 * min_items]
        mean_disc: dict[str, tuple] = {}
        for measure in _MEASURES:
            cells = []
            for ki, _ in enumerate(ks):
                values = [
                    per_unit[uid][measure][ki]
                    for uid in eligible
                    if per_unit[uid][measure][ki] is not None
                ]
                cells.append(float(np.mean(values)) if values else None)
            mean_disc[measure] = tuple(cells)
        sv_pairs, sv_seq_pairs = [], []
        for uid in eligible:
            for k in tier_ks:
                ki = list(ks).index(k)
                sv_pairs.append((per_unit[uid]["disc_plus"][ki], per_unit[uid]["disc_minus"][ki]))
                sv_seq_pairs.append(
                    (per_unit[uid]["disc_plus_seq"][ki], per_unit[uid]["disc_minus_seq"][ki])
                )
        tiers.append(
            TierSummary(
                min_items=min_items,
                eligible_ids=tuple(sorted(eligible)),
                ks=tier_ks,
                mean_disc=mean_disc,
                sv=sanity_violation(sv_pairs),
                sv_seq=sanity_violation(sv_seq_pairs),
            )
        )

    frozen = {
        uid: {m: tuple(v) for m, v in cells.items()} for uid, cells in sorted(per_unit.items())
    }
    return EvaluationReport(per_unit=frozen, tiers=tuple(tiers), findings=tuple(findings))


def report_to_json(report: EvaluationReport, ks: Sequence[int] = EVAL_KS) -> str:
    doc = {
        "ks": list(ks),
        "per_unit": {
            uid: {m: list(v) for m, v in cells.items()}
            for uid, cells in sorted(report.per_unit.items())
        },
        "tiers": [
            {
                "min_items_per_end": t.min_items,
                "eligible_ids": list(t.eligible_ids),
                "ks": list(t.ks),
                "mean_disc": {m: list(v) for m, v in t.mean_disc.items()},
                "sv": t.sv,
                "sv_seq": t.sv_seq,
            }
            for t in report.tiers
        ],
        "findings": list(report.findings),
    }
    return json.dumps(doc, indent=2) + "\n"


_COLUMNS = (
    "Disc+ (↓)",
    "Disc+ Seq (↓)",
    "Disc- (↑)",
    "Disc- Seq (↑)",
    "SV (↓)",
    "SV Seq (↓)",
)


def _cell(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.3f}"


def render_report_text(report: EvaluationReport, ks: Sequence[int] = EVAL_KS) -> str:
    """Aligned text table: one section per eligibility tier, one row per k.

    Sequential cells at k=1 print "-" (one-by-one and sequential coincide
    there); the SV columns carry the tier-pooled fractions on every row.
    """
    label_width = 16
    col_width = max(len(c) for c in _COLUMNS) + 2
    lines = []
    header = " " * label_width + "".join(c.rjust(col_width) for c in _COLUMNS)
    for tier in report.tiers:
        lines.append(
            f"Videos with at least {tier.min_items} top- and {tier.min_items} "
            f"bottom-scoring item(s): {len(tier.eligible_ids)} eligible"
        )
        lines.append(header)
        for k in tier.ks:
            ki = list(ks).index(k)
            row = [
                _cell(tier.mean_disc["disc_plus"][ki]),
                "-" if k == 1 else _cell(tier.mean_disc["disc_plus_seq"][ki]),
                _cell(tier.mean_disc["disc_minus"][ki]),
                "-" if k == 1 else _cell(tier.mean_disc["disc_minus_seq"][ki]),
                _cell(tier.sv),
                _cell(tier.sv_seq),
            ]
            lines.append(
                f"Top/Bottom-{k}".ljust(label_width) + "".join(c.rjust(col_width) for c in row)
            )
        lines.append("")
    return "\n".join(lines)
