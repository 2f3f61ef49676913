"""Score-based asymptotic variance and multiplier-bootstrap intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .estimator import (
    apply_trimming,
    build_weights_panel,
    build_weights_rcs,
    residuals_rcs,
)
from .kernels import kernel_weights, resolve_bandwidth
from .model import (
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
)

_BOOT_TAG = 0x626F6F74
PI_HAT_MIN = 1e-12


@dataclass(frozen=True)
class ScoreVector:
    """Per-observation scores psi with mean equal to the point estimate.

    psi re-expresses the normalized estimator per observation (trimmed
    rows contribute zero), so mean(psi) recovers delta_hat by
    construction.  pi_hat is the full-sample kernel mass at the treated
    dose and kernel_treat its per-observation terms; both feed the
    variance formula.
    """

    psi: np.ndarray
    pi_hat: float
    delta_hat: float
    kernel_treat: np.ndarray
    design: str

    @property
    def n(self) -> int:
        return self.psi.shape[0]


def compute_scores(
    sample,
    nuisances,
    estimand: EstimandSpec,
    config: EstimationConfig,
    delta_hat: float,
    bandwidth: float | None = None,
) -> ScoreVector:
    """Evaluate the orthogonal score at the fitted nuisances.

    Rebuilds the same trimmed group weights as the point estimator, so
    exclusions are consistent between psi and delta_hat.
    """
    n = sample.n
    h = resolve_bandwidth(config, n) if bandwidth is None else float(bandwidth)
    panel = isinstance(sample, PanelSample)
    if panel:
        gw = apply_trimming(
            build_weights_panel(sample, nuisances, estimand, h, config.kernel),
            config.trim_threshold,
        )
        kernel_treat = kernel_weights(sample.d, estimand.d_treat, h, config.kernel)
        resid = (sample.y_post - sample.y_pre) - nuisances.m_ctrl
        psi = n * (gw.normalized[0] - gw.normalized[1]) * resid
    else:
        gw = apply_trimming(
            build_weights_rcs(sample, nuisances, estimand, h, config.kernel),
            config.trim_threshold,
        )
        post = sample.period == estimand.t
        kernel_treat = np.where(
            post, kernel_weights(sample.d, estimand.d_treat, h, config.kernel), 0.0
        )
        r1, e2, e3, e4 = residuals_rcs(sample, nuisances)
        psi = n * (
            (gw.normalized[0] * r1 - gw.normalized[1] * e2)
            - (gw.normalized[2] * e3 - gw.normalized[3] * e4)
        )
    pi_hat = math.fsum(kernel_treat.tolist()) / n
    if pi_hat < PI_HAT_MIN:
        raise EstimationError(
            f"pi_hat below 1e-12 at dose {estimand.d_treat:g}; no kernel mass at the treated dose"
        )
    return ScoreVector(
        psi=psi,
        pi_hat=pi_hat,
        delta_hat=float(delta_hat),
        kernel_treat=kernel_treat,
        design="panel" if panel else "rcs",
    )


def variance_hat(scores: ScoreVector, design: str | None = None) -> float:
    """Sample analog of the score variance with the kernel-mass term."""
    if design is not None and design != scores.design:
        raise InputError(f"scores were computed for design {scores.design!r}")
    phi = scores.psi - scores.delta_hat
    adj = (scores.delta_hat / scores.pi_hat) * (scores.kernel_treat - scores.pi_hat)
    dev = phi - adj
    return float(np.mean(dev * dev))


def ci_asymptotic(delta_hat: float, sigma2_hat: float, n: int, alpha: float):
    """Two-sided normal interval delta_hat +/- z * sigma_hat / sqrt(n)."""
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    if sigma2_hat < 0:
        raise InputError("sigma2_hat must be >= 0")
    half = norm.ppf(1.0 - alpha / 2.0) * np.sqrt(sigma2_hat) / np.sqrt(n)
    return float(delta_hat - half), float(delta_hat + half)


def multiplier_stream(seed: int, b: int, n: int, kind: str = "exponential") -> np.ndarray:
    """The multipliers used for bootstrap replication b.

    Exponential(1) multipliers have mean and variance one and
    sub-exponential tails; kind="ones" is a degenerate test hook.
    """
    if kind == "ones":
        return np.ones(n)
    if kind != "exponential":
        raise InputError(f"unknown multiplier kind {kind!r}")
    rng = np.random.default_rng(np.random.SeedSequence([_BOOT_TAG, int(seed), int(b)]))
    return rng.standard_exponential(n)


def multiplier_bootstrap(
    scores: ScoreVector,
    B: int,
    alpha: float,
    seed: int,
    multiplier: str = "exponential",
):
    """Percentile-of-recentered-draws interval from multiplier draws."""
    if B < 100:
        raise InputError("multiplier bootstrap needs B >= 100")
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    n = scores.n
    deltas = np.empty(B)
    for b in range(B):
        xi = multiplier_stream(seed, b, n, multiplier)
        deltas[b] = float(xi @ scores.psi) / n
    diffs = deltas - scores.delta_hat
    low = scores.delta_hat - np.quantile(diffs, 1.0 - alpha / 2.0)
    high = scores.delta_hat - np.quantile(diffs, alpha / 2.0)
    return float(low), float(high)
