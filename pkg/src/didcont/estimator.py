"""Normalized doubly-robust ATET point estimators with trimming.

Each score group carries kernel weights (times density ratios where
the group is reweighted toward the treated-dose population).  Weights
are normalized to sum to one within each group, and observations whose
normalized weight exceeds the trim threshold are dropped iteratively
until none does.  Group sums use compensated summation in ascending
row order so results are bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import kernel_weights, resolve_bandwidth
from .model import (
    EmptyGroupError,
    EstimandSpec,
    EstimationConfig,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
    TrimmingError,
)
from .nuisance import PanelNuisances, RcsNuisances


@dataclass(frozen=True)
class GroupWeights:
    """Raw and normalized per-observation weights for each score group.

    normalized is the post-trimming version: within each group the
    retained weights sum to one and trimmed observations carry zero.
    """

    names: tuple[str, ...]
    raw: tuple[np.ndarray, ...]
    normalized: tuple[np.ndarray, ...]
    trimmed: tuple[np.ndarray, ...]

    @property
    def n_trimmed_per_group(self) -> tuple[int, ...]:
        return tuple(int(np.count_nonzero(t)) for t in self.trimmed)

    @property
    def n_effective(self) -> int:
        active = np.zeros(self.normalized[0].shape[0], dtype=bool)
        for g in self.normalized:
            active |= g > 0
        return int(np.count_nonzero(active))


@dataclass(frozen=True)
class AtetEstimate:
    delta_hat: float
    se: float
    ci_low: float
    ci_high: float
    h_used: float
    n_trimmed_per_group: tuple[int, ...]
    n_effective: int


def _group_sum(values: np.ndarray) -> float:
    return math.fsum(values.tolist())


def _normalize_group(raw: np.ndarray, name: str) -> np.ndarray:
    total = _group_sum(raw)
    if not total > 0:
        raise EmptyGroupError(f"empty group {name}")
    return raw / total


def build_weights_rcs(
    sample: RepeatedCrossSectionSample,
    nuisances: RcsNuisances,
    estimand: EstimandSpec,
    h: float,
    kernel: str = "epanechnikov",
) -> GroupWeights:
    """Raw group weights for the repeated cross-section estimator.

    g1: treated dose, post period.  g2: treated dose, pre period,
    reweighted by rho(d_t, t)/rho(d_t, t-1).  g3/g4: control dose in
    post/pre, reweighted by rho(d_t, t)/rho(d'_t, same period).
    """
    t_post, t_pre = estimand.t, estimand.pre_period
    post = sample.period == t_post
    pre = sample.period == t_pre
    w_treat = kernel_weights(sample.d, estimand.d_treat, h, kernel)
    w_ctrl = kernel_weights(sample.d, estimand.d_control, h, kernel)

    g1 = np.where(post, w_treat, 0.0)
    g2 = np.where(pre, w_treat * (nuisances.rho_treat_post / nuisances.rho_treat_pre), 0.0)
    g3 = np.where(post, w_ctrl * (nuisances.rho_treat_post / nuisances.rho_ctrl_post), 0.0)
    g4 = np.where(pre, w_ctrl * (nuisances.rho_treat_post / nuisances.rho_ctrl_pre), 0.0)

    names = (
        f"g1 (dose {estimand.d_treat:g}, period {t_post})",
        f"g2 (dose {estimand.d_treat:g}, period {t_pre})",
        f"g3 (dose {estimand.d_control:g}, period {t_post})",
        f"g4 (dose {estimand.d_control:g}, period {t_pre})",
    )
    raw = (g1, g2, g3, g4)
    normalized = tuple(_normalize_group(g, nm) for g, nm in zip(raw, names))
    untrimmed = tuple(np.zeros(sample.n, dtype=bool) for _ in raw)
    return GroupWeights(names, raw, normalized, untrimmed)


def build_weights_panel(
    sample: PanelSample,
    nuisances: PanelNuisances,
    estimand: EstimandSpec,
    h: float,
    kernel: str = "epanechnikov",
) -> GroupWeights:
    w_treat = kernel_weights(sample.d, estimand.d_treat, h, kernel)
    w_ctrl = kernel_weights(sample.d, estimand.d_control, h, kernel)
    g1 = w_treat
    g2 = w_ctrl * (nuisances.p_treat / nuisances.p_ctrl)
    names = (
        f"g1 (dose {estimand.d_treat:g})",
        f"g2 (dose {estimand.d_control:g})",
    )
    raw = (g1, g2)
    normalized = tuple(_normalize_group(g, nm) for g, nm in zip(raw, names))
    untrimmed = tuple(np.zeros(sample.n, dtype=bool) for _ in raw)
    return GroupWeights(names, raw, normalized, untrimmed)


def _trim_group(raw: np.ndarray, threshold: float, name: str):
    kept = raw > 0
    while True:
        total = math.fsum(raw[kept].tolist())
        if not total > 0:
            raise TrimmingError(f"group empties under trimming: {name} at threshold {threshold:g}")
        norm = np.where(kept, raw / total, 0.0)
        over = norm > threshold
        if not np.any(over):
            trimmed = (raw > 0) & ~kept
            return norm, trimmed
        kept &= ~over


def apply_trimming(weights: GroupWeights, threshold: float) -> GroupWeights:
    """Drop normalized weights above threshold, renormalize, repeat."""
    if not 0 < threshold <= 1:
        raise InputError("trim_threshold must lie in (0, 1]")
    normalized, trimmed = [], []
    for raw, name in zip(weights.raw, weights.names):
        norm, mask = _trim_group(raw, threshold, name)
        normalized.append(norm)
        trimmed.append(mask)
    return GroupWeights(weights.names, weights.raw, tuple(normalized), tuple(trimmed))


def residuals_rcs(sample: RepeatedCrossSectionSample, nuisances: RcsNuisances):
    """Per-group residual terms of the repeated cross-section estimator.

    The group-1 term subtracts the two pre-period fits as a difference
    so it collapses to the group-3 residual exactly when the fits
    coincide (degenerate d = d' contrast).
    """
    r1 = (sample.y - nuisances.mu_ctrl_post) - (nuisances.mu_treat_pre - nuisances.mu_ctrl_pre)
    e2 = sample.y - nuisances.mu_treat_pre
    e3 = sample.y - nuisances.mu_ctrl_post
    e4 = sample.y - nuisances.mu_ctrl_pre
    return r1, e2, e3, e4


def atet_rcs(
    sample: RepeatedCrossSectionSample,
    nuisances: RcsNuisances,
    estimand: EstimandSpec,
    config: EstimationConfig,
    bandwidth: float | None = None,
) -> AtetEstimate:
    """Point estimate for repeated cross-sections; se filled later."""
    h = resolve_bandwidth(config, sample.n) if bandwidth is None else float(bandwidth)
    gw = apply_trimming(
        build_weights_rcs(sample, nuisances, estimand, h, config.kernel),
        config.trim_threshold,
    )
    r1, e2, e3, e4 = residuals_rcs(sample, nuisances)
    t1 = _group_sum(gw.normalized[0] * r1)
    t2 = _group_sum(gw.normalized[1] * e2)
    t3 = _group_sum(gw.normalized[2] * e3)
    t4 = _group_sum(gw.normalized[3] * e4)
    delta = (t1 - t2) - (t3 - t4)
    return AtetEstimate(
        delta_hat=delta,
        se=float("nan"),
        ci_low=float("nan"),
        ci_high=float("nan"),
        h_used=h,
        n_trimmed_per_group=gw.n_trimmed_per_group,
        n_effective=gw.n_effective,
    )


def atet_panel(
    sample: PanelSample,
    nuisances: PanelNuisances,
    estimand: EstimandSpec,
    config: EstimationConfig,
    bandwidth: float | None = None,
) -> AtetEstimate:
    h = resolve_bandwidth(config, sample.n) if bandwidth is None else float(bandwidth)
    gw = apply_trimming(
        build_weights_panel(sample, nuisances, estimand, h, config.kernel),
        config.trim_threshold,
    )
    resid = (sample.y_post - sample.y_pre) - nuisances.m_ctrl
    t1 = _group_sum(gw.normalized[0] * resid)
    t2 = _group_sum(gw.normalized[1] * resid)
    delta = t1 - t2
    return AtetEstimate(
        delta_hat=delta,
        se=float("nan"),
        ci_low=float("nan"),
        ci_high=float("nan"),
        h_used=h,
        n_trimmed_per_group=gw.n_trimmed_per_group,
        n_effective=gw.n_effective,
    )
