"""Fragment-level explanations.

Two routes: a model-agnostic perturbation-and-surrogate fit over fragment
masks, and a model-specific one that averages the oracle's attention
diagonal per fragment.  Both produce a ranking of all fragments plus the
top/bottom three.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fragmentation import fragment_scores
from .oracle import Oracle
from .surrogate import (
    TOP_K,
    LimeConfig,
    fit_weighted_ridge,
    kernel_weights,
    rank_items,
    sample_masks,
)
from .types import NONE_SPEC, PerturbationSpec, ValidationError, VideoBundle


@dataclass(frozen=True)
class FragmentExplanation:
    video_id: str
    method: str  # "lime" | "attention"
    weights: tuple[float, ...]
    ranking: tuple[int, ...]
    top: tuple[int, ...]
    bottom: tuple[int, ...]
    r2: Optional[float]
    n_perturbations: int
    config: Optional[LimeConfig] = None


def _ranked_fields(weights: np.ndarray) -> tuple[tuple, tuple, tuple]:
    ranking = tuple(int(i) for i in rank_items(weights))
    k = min(TOP_K, len(ranking))
    top = ranking[:k]
    bottom = tuple(reversed(ranking))[:k]  # least influential first
    return ranking, top, bottom


def masks_to_specs(masks: np.ndarray) -> list[PerturbationSpec]:
    """One spec per mask row; the all-ones row is the unperturbed instance."""
    specs = []
    for row in masks:
        zeros = np.flatnonzero(row == 0)
        if zeros.size == 0:
            specs.append(NONE_SPEC)
        else:
            specs.append(PerturbationSpec.for_fragments(int(z) for z in zeros))
    return specs


def lime_fragment_explain(
    oracle: Oracle, bundle: VideoBundle, cfg: LimeConfig = LimeConfig()
) -> FragmentExplanation:
    """Fit a linear surrogate of the mean frame score on fragment-presence bits.

    The target of each perturbation is the mean of the returned score
    sequence over all frames of the video; the fitted coefficients (without
    the intercept) are the fragment weights.
    """
    n = len(bundle.fragmentation)
    if n < 2:
        raise ValidationError("fragment explanation needs at least 2 fragments")
    masks = sample_masks(n, cfg)
    scores = oracle.score_many(bundle, masks_to_specs(masks))
    targets = scores.mean(axis=1)
    coef, _, r2 = fit_weighted_ridge(
        masks, targets, kernel_weights(masks, cfg), cfg.ridge_lambda, item_name="fragment"
    )
    ranking, top, bottom = _ranked_fields(coef)
    return FragmentExplanation(
        video_id=bundle.video_id,
        method="lime",
        weights=tuple(float(w) for w in coef),
        ranking=ranking,
        top=top,
        bottom=bottom,
        r2=r2,
        n_perturbations=masks.shape[0],
        config=cfg,
    )


def attention_fragment_explain(oracle: Oracle, bundle: VideoBundle) -> FragmentExplanation:
    """Average the attention diagonal per fragment and rank fragments by it."""
    diag = oracle.attention_diagonal(bundle)
    weights = fragment_scores(diag.weights, bundle.fragmentation)
    ranking, top, bottom = _ranked_fields(weights)
    return FragmentExplanation(
        video_id=bundle.video_id,
        method="attention",
        weights=tuple(float(w) for w in weights),
        ranking=ranking,
        top=top,
        bottom=bottom,
        r2=None,
        n_perturbations=0,
        config=None,
    )


def explanation_to_json(expl: FragmentExplanation) -> str:
    doc = {
        "video_id": expl.video_id,
        "method": expl.method,
        "weights": list(expl.weights),
        "ranking": list(expl.ranking),
        "top": list(expl.top),
        "bottom": list(expl.bottom),
        "config_echo": expl.config.echo() if expl.config is not None else None,
        "r2": expl.r2,
        "n_perturbations": expl.n_perturbations,
    }
    return json.dumps(doc, indent=2) + "\n"


def explanation_from_json(text: str) -> FragmentExplanation:
    doc = json.loads(text)
    cfg = LimeConfig(**doc["config_echo"]) if doc.get("config_echo") else None
    try:
        return FragmentExplanation(
            video_id=doc["video_id"],
            method=doc["method"],
            weights=tuple(doc["weights"]),
            ranking=tuple(doc["ranking"]),
            top=tuple(doc["top"]),
            bottom=tuple(doc["bottom"]),
            r2=doc["r2"],
            n_perturbations=doc["n_perturbations"],
            config=cfg,
        )
    except KeyError as exc:
        raise ValidationError(f"fragment explanation JSON missing key {exc}") from None
