"""Nuisance models: local outcome regressions and dose densities.

All slots are fit on a training sample and evaluated on held-out rows;
the evaluation inputs are control matrices only, so a fit can never
touch held-out outcomes or doses.

Outcome means at a target dose are kernel-weighted lassos (weights
omega(D; dose, h) within the relevant period cell).  The generalized
propensity score for repeated cross-sections factorizes as
f(D = dose | T = period, controls) * Pr(T = period | controls); the
panel design needs only the dose density, fit once and evaluated at
both target doses.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .kernels import kernel_weights
from .lasso import LassoModel, fit_lasso, fit_logistic_lasso
from .model import (
    EmptyLocalCellError,
    EstimandSpec,
    EstimationConfig,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
)

DENSITY_FLOOR = 1e-4
SIGMA_FLOOR = 1e-6


def slot_seed(base: int, kind: str, dose: float | None = None, period: int | None = None) -> int:
    """Derive a stream seed from what a fit is, not where it runs.

    Seeds depend on the slot's semantic content (kind, dose bits,
    period) so two slots describing the same quantity get the same
    stream; with d_treat = d_control the paired fits then agree
    bit for bit and the estimator cancels exactly.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(base)).encode())
    h.update(kind.encode())
    if dose is not None:
        h.update(struct.pack("<d", float(dose)))
    if period is not None:
        h.update(struct.pack("<q", int(period)))
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class CondDensityModel:
    """Normal (or lognormal) dose density with a lasso mean model."""

    mean_model: LassoModel
    sigma: float
    family: str

    def density_at(self, controls, d: float) -> np.ndarray:
        mu = self.mean_model.predict(controls)
        if self.family == "loglinear_normal":
            if d <= 0:
                raise InputError("nonpositive dose under loglinear_normal")
            z = (np.log(d) - mu) / self.sigma
            pdf = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * self.sigma * d)
        else:
            z = (d - mu) / self.sigma
            pdf = np.exp(-0.5 * z * z) / (np.sqrt(2.0 * np.pi) * self.sigma)
        return np.maximum(pdf, DENSITY_FLOOR)


def fit_cond_density(
    controls,
    doses,
    family: str = "linear_normal",
    *,
    cv_folds: int = 10,
    seed: int = 0,
) -> CondDensityModel:
    doses = np.asarray(doses, dtype=np.float64)
    if family == "loglinear_normal":
        if np.any(doses <= 0):
            raise InputError("nonpositive dose under loglinear_normal")
        target = np.log(doses)
    elif family == "linear_normal":
        target = doses
    else:
        raise InputError(f"unknown ps_family {family!r}")
    model = fit_lasso(controls, target, cv_folds=cv_folds, seed=seed)
    resid = target - model.predict(controls)
    sigma = max(float(np.sqrt(np.mean(resid * resid))), SIGMA_FLOOR)
    return CondDensityModel(model, sigma, family)


@dataclass(frozen=True)
class RcsNuisances:
    """Per-row slot predictions for the repeated cross-section score."""

    mu_treat_pre: np.ndarray
    mu_ctrl_post: np.ndarray
    mu_ctrl_pre: np.ndarray
    rho_treat_post: np.ndarray
    rho_treat_pre: np.ndarray
    rho_ctrl_post: np.ndarray
    rho_ctrl_pre: np.ndarray

    SLOTS = (
        "mu_treat_pre",
        "mu_ctrl_post",
        "mu_ctrl_pre",
        "rho_treat_post",
        "rho_treat_pre",
        "rho_ctrl_post",
        "rho_ctrl_pre",
    )


@dataclass(frozen=True)
class PanelNuisances:
    """Per-row slot predictions for the panel score."""

    m_ctrl: np.ndarray
    p_treat: np.ndarray
    p_ctrl: np.ndarray

    SLOTS = ("m_ctrl", "p_treat", "p_ctrl")


def _canonical_order(*cols) -> np.ndarray:
    """Stable sort index over the given columns, first column primary.

    Training rows get re-ordered by this before any fit so results do
    not depend on caller row order; rows equal in every key are fully
    exchangeable and leave fits bitwise unchanged.
    """
    keys: list[np.ndarray] = []
    for c in cols:
        a = np.asarray(c)
        if a.ndim == 1:
            keys.append(a)
        else:
            keys.extend(a[:, j] for j in range(a.shape[1]))
    return np.lexsort(keys[::-1])


def _weighted_outcome_fit(controls, y, weights, dose, period, config, seed):
    if weights.sum() <= 0:
        where = f"dose {dose:g}" if period is None else f"dose {dose:g}, period {period}"
        raise EmptyLocalCellError(f"empty local cell at {where}")
    keep = weights > 0
    return fit_lasso(
        controls[keep],
        y[keep],
        weights[keep],
        cv_folds=config.lasso_cv_folds,
        seed=seed,
    )


def estimate_nuisances_rcs(
    train: RepeatedCrossSectionSample,
    eval_controls: np.ndarray,
    estimand: EstimandSpec,
    config: EstimationConfig,
    bandwidth: float,
    seed: int,
) -> RcsNuisances:
    """Fit the seven repeated cross-section slots and predict held-out rows."""
    train = train.subset(_canonical_order(train.d, train.period, train.y, train.controls()))
    t_post, t_pre = estimand.t, estimand.t - 1
    d_treat, d_ctrl = estimand.d_treat, estimand.d_control
    controls = train.controls()
    post = train.period == t_post
    pre = train.period == t_pre

    mu_fits: dict[tuple, LassoModel] = {}

    def mu_at(dose: float, period: int) -> np.ndarray:
        key = (struct.pack("<d", dose), period)
        if key not in mu_fits:
            rows = post if period == t_post else pre
            w = np.zeros(train.n)
            w[rows] = kernel_weights(train.d[rows], dose, bandwidth, config.kernel)
            mu_fits[key] = _weighted_outcome_fit(
                controls,
                train.y,
                w,
                dose,
                period,
                config,
                slot_seed(seed, "mu", dose, period),
            )
        return mu_fits[key].predict(eval_controls)

    density_fits: dict[int, CondDensityModel] = {}

    def density_model(period: int) -> CondDensityModel:
        if period not in density_fits:
            rows = post if period == t_post else pre
            if not np.any(rows):
                raise EmptyLocalCellError(f"empty local cell at period {period}")
            density_fits[period] = fit_cond_density(
                controls[rows],
                train.d[rows],
                config.ps_family,
                cv_folds=config.lasso_cv_folds,
                seed=slot_seed(seed, "density", None, period),
            )
        return density_fits[period]

    # fit both period densities before the logistic model so a missing
    # period surfaces as the cell error, not a single-class failure
    density_model(t_post)
    density_model(t_pre)
    treat_model = fit_logistic_lasso(
        controls,
        (train.period == t_post).astype(np.float64),
        cv_folds=config.lasso_cv_folds,
        seed=slot_seed(seed, "period-choice"),
    )
    p_post = treat_model.predict(eval_controls)

    rho_cache: dict[tuple, np.ndarray] = {}

    def rho_at(dose: float, period: int) -> np.ndarray:
        key = (struct.pack("<d", dose), period)
        if key not in rho_cache:
            dens = density_model(period).density_at(eval_controls, dose)
            prob = p_post if period == t_post else 1.0 - p_post
            rho_cache[key] = dens * prob
        return rho_cache[key]

    return RcsNuisances(
        mu_treat_pre=mu_at(d_treat, t_pre),
        mu_ctrl_post=mu_at(d_ctrl, t_post),
        mu_ctrl_pre=mu_at(d_ctrl, t_pre),
        rho_treat_post=rho_at(d_treat, t_post),
        rho_treat_pre=rho_at(d_treat, t_pre),
        rho_ctrl_post=rho_at(d_ctrl, t_post),
        rho_ctrl_pre=rho_at(d_ctrl, t_pre),
    )


def estimate_nuisances_panel(
    train: PanelSample,
    eval_controls: np.ndarray,
    estimand: EstimandSpec,
    config: EstimationConfig,
    bandwidth: float,
    seed: int,
) -> PanelNuisances:
    """Fit the panel slots and predict held-out rows.

    One dose-density model serves both target doses, so the score's
    density ratio is exactly 1 when the doses coincide.
    """
    train = train.subset(
        _canonical_order(train.d, train.y_pre, train.y_post, train.controls())
    )
    d_treat, d_ctrl = estimand.d_treat, estimand.d_control
    controls = train.controls()

    w = kernel_weights(train.d, d_ctrl, bandwidth, config.kernel)
    m_model = _weighted_outcome_fit(
        controls,
        train.y_post - train.y_pre,
        w,
        d_ctrl,
        None,
        config,
        slot_seed(seed, "m", d_ctrl),
    )

    dens = fit_cond_density(
        controls,
        train.d,
        config.ps_family,
        cv_folds=config.lasso_cv_folds,
        seed=slot_seed(seed, "density"),
    )
    p_cache: dict[bytes, np.ndarray] = {}

    def p_at(dose: float) -> np.ndarray:
        key = struct.pack("<d", dose)
        if key not in p_cache:
            p_cache[key] = dens.density_at(eval_controls, dose)
        return p_cache[key]

    return PanelNuisances(
        m_ctrl=m_model.predict(eval_controls),
        p_treat=p_at(d_treat),
        p_ctrl=p_at(d_ctrl),
    )
