"""Mask sampling and the weighted ridge surrogate fit.

Bit convention: 1 = item present, 0 = item masked, so the all-ones mask is
the unperturbed instance.  The same sampler and fit serve fragment-level and
object-level explanations; only the meaning of a bit differs.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .types import ValidationError

TOP_K = 3  # explanations report the three strongest and weakest items

KERNELS = ("uniform", "exponential")


class FitError(RuntimeError):
    """The surrogate fit is impossible on this design matrix."""


@dataclass(frozen=True)
class LimeConfig:
    """Knobs of the perturbation-and-fit loop.

    `num_perturbations` defaults to the fragment-level budget; object-level
    explanations default to `OBJECT_PERTURBATIONS`.  When the full mask space
    is no larger than the budget it is enumerated instead of sampled.
    """

    num_perturbations: int = 20000
    mask_probability: float = 0.5
    ridge_lambda: float = 1e-8
    kernel: str = "uniform"
    kernel_width: float = 0.25
    rng_seed: int = 0
    exhaustive_when_possible: bool = True

    def __post_init__(self):
        if self.num_perturbations < 1:
            raise ValidationError("lime: num_perturbations must be >= 1")
        if not (0.0 < self.mask_probability < 1.0):
            raise ValidationError("lime: mask_probability must lie in (0, 1)")
        if self.ridge_lambda < 0:
            raise ValidationError("lime: ridge_lambda must be >= 0")
        if self.kernel not in KERNELS:
            raise ValidationError(f"lime: unknown kernel {self.kernel!r}")
        if not self.kernel_width > 0:
            raise ValidationError("lime: kernel_width must be > 0")

    def echo(self) -> dict:
        return asdict(self)


OBJECT_PERTURBATIONS = 2000  # default budget for object-level explanations


def sample_masks(n_items: int, cfg: LimeConfig) -> np.ndarray:
    """Binary masks of shape (m, n_items), dtype uint8.

    Exhaustive mode (2**n_items <= budget) enumerates every mask exactly once
    in integer order, bit j of value v giving item j.  Sampled mode draws
    i.i.d. Bernoulli(mask_probability) bits, always emits the all-ones mask
    first, and rejects the all-zeros mask (it carries no per-item signal).
    Deterministic for a fixed seed.
    """
    if n_items < 1:
        raise ValidationError("sample_masks: need at least one item")
    if (
        cfg.exhaustive_when_possible
        and n_items < 63
        and 2**n_items <= cfg.num_perturbations
    ):
        values = np.arange(2**n_items, dtype=np.uint64)
        return ((values[:, None] >> np.arange(n_items, dtype=np.uint64)) & 1).astype(np.uint8)

    m = cfg.num_perturbations
    rng = np.random.default_rng(cfg.rng_seed)
    masks = np.empty((m, n_items), dtype=np.uint8)
    masks[0] = 1
    filled = 1
    while filled < m:
        draw = (rng.random((m - filled, n_items)) < cfg.mask_probability).astype(np.uint8)
        draw = draw[draw.any(axis=1)]
        take = min(len(draw), m - filled)
        masks[filled : filled + take] = draw[:take]
        filled += take
    return masks


def kernel_weights(masks: np.ndarray, cfg: LimeConfig) -> np.ndarray:
    """Proximity weight per mask relative to the unperturbed (all-ones) mask."""
    m, n = masks.shape
    if cfg.kernel == "uniform":
        return np.ones(m)
    # cosine of a binary mask against all-ones is sqrt(k/n) for k set bits
    k = masks.sum(axis=1)
    dist = np.where(k > 0, 1.0 - np.sqrt(k / n), 1.0)
    return np.exp(-(dist**2) / cfg.kernel_width**2)


def fit_weighted_ridge(
    masks: np.ndarray,
    targets: np.ndarray,
    weights: np.ndarray,
    ridge_lambda: float,
    item_name: str = "item",
    item_labels=None,
) -> tuple[np.ndarray, float, float]:
    """Fit targets on mask bits plus an unpenalized intercept.

    Solves the weighted normal equations with `ridge_lambda` added to the
    diagonal of the bit coefficients only.  Returns (coefficients, intercept,
    weighted R^2); R^2 is defined as 0 for a constant target.
    """
    masks = np.asarray(masks, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    m, n = masks.shape
    if m < n + 2:
        raise FitError(
            f"underdetermined fit: {m} perturbations for {n} {item_name}s "
            f"(need at least {n + 2})"
        )
    for j in range(n):
        col = masks[:, j]
        if col.min() == col.max():
            label = item_labels[j] if item_labels is not None else j
            raise FitError(
                f"degenerate design: {item_name} {label} never varied across perturbations"
            )

    x = np.hstack([np.ones((m, 1)), masks])
    xw = x * weights[:, None]
    normal = x.T @ xw
    penalty = np.full(n + 1, ridge_lambda)
    penalty[0] = 0.0  # intercept stays unpenalized
    normal[np.diag_indices_from(normal)] += penalty
    rhs = xw.T @ targets
    try:
        beta = np.linalg.solve(normal, rhs)
    except np.linalg.LinAlgError as exc:
        raise FitError(f"singular normal equations: {exc}") from None

    residual = targets - x @ beta
    w_mean = float(np.average(targets, weights=weights))
    ss_tot = float(np.sum(weights * (targets - w_mean) ** 2))
    ss_res = float(np.sum(weights * residual**2))
    r2 = 0.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return beta[1:], float(beta[0]), r2


def rank_items(weights: np.ndarray) -> np.ndarray:
    """Indices sorted by weight descending; ties broken by lower index first."""
    return np.argsort(-np.asarray(weights, dtype=np.float64), kind="stable")
