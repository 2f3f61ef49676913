"""Weighted lasso via coordinate descent, with a logistic variant.

Both solvers minimize a weight-normalized objective,

    (1 / (2 sum(w))) * sum_i w_i * (y_i - b0 - x_i b)^2 + lam * ||b||_1

for the gaussian family, and the analogous penalized weighted
log-likelihood for the binomial family.  Features are standardized with
the observation weights before descent, so the returned coefficients
live on the standardized scale; predict() undoes this.

The inner sweeps are numba-jitted.  The first full pass visits every
coordinate; subsequent passes cycle over the currently nonzero set
until stable, then a full pass re-checks the rest.  A pass that changes
no coefficient by more than the tolerance ends the fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit

from .model import InputError

COORD_TOL = 1e-7           # sweep convergence for the returned fit's path
FINAL_TOL = 1e-10          # polish tolerance for the returned fit
CV_TOL = 1e-4              # fold fits only rank lambdas, so they run loose
KKT_TOL = 1e-6
LAMBDA_GRID_SIZE = 100
LAMBDA_MIN_RATIO = 1e-3
MAX_SWEEPS = 100_000
IRLS_MAX_ITER = 50
PROB_CLIP = 1e-5


@njit(cache=True)
def _coordinate_pass(Xs, w, sw, v, r, beta, lam, active_only):
    """One cycle over coordinates in place; returns the largest step."""
    n, p = Xs.shape
    max_delta = 0.0
    for j in range(p):
        if v[j] <= 0.0:
            continue
        if active_only and beta[j] == 0.0:
            continue
        col = Xs[:, j]
        rho = 0.0
        for i in range(n):
            rho += col[i] * w[i] * r[i]
        rho = rho / sw + v[j] * beta[j]
        if rho > lam:
            bnew = (rho - lam) / v[j]
        elif rho < -lam:
            bnew = (rho + lam) / v[j]
        else:
            bnew = 0.0
        diff = bnew - beta[j]
        if diff != 0.0:
            for i in range(n):
                r[i] -= diff * col[i]
            beta[j] = bnew
            if abs(diff) > max_delta:
                max_delta = abs(diff)
    return max_delta


@njit(cache=True)
def _cd_passes(Xs, w, sw, v, r, beta, lam, tol, max_sweeps):
    """Run coordinate-descent passes in place; returns sweeps used.

    r must hold the current weighted-problem residual y - Xs @ beta;
    v holds the per-column quadratic terms sum(w * Xs[:, j]**2) / sw.
    A full pass over every coordinate alternates with cycles over the
    currently nonzero set until a full pass moves nothing.
    """
    sweeps = 0
    while sweeps < max_sweeps:
        max_delta = _coordinate_pass(Xs, w, sw, v, r, beta, lam, False)
        sweeps += 1
        if max_delta < tol:
            return sweeps
        while sweeps < max_sweeps:
            md = _coordinate_pass(Xs, w, sw, v, r, beta, lam, True)
            sweeps += 1
            if md < tol:
                break
    return sweeps


def _as_matrix(X) -> np.ndarray:
    X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=np.float64)))
    if X.ndim != 2:
        raise InputError("feature matrix must be two-dimensional")
    return X


def _check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.ascontiguousarray(np.asarray(w, dtype=np.float64))
    if w.shape != (n,):
        raise InputError("weights have mismatched length")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InputError("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise InputError("weights must have positive sum")
    return w


def _standardize(X: np.ndarray, w: np.ndarray):
    """Weighted centering and scaling; constant columns get scale 1."""
    sw = w.sum()
    means = (w @ X) / sw
    centered = X - means
    var = (w @ (centered * centered)) / sw
    scales = np.sqrt(var)
    scales[scales < 1e-12] = 1.0
    # column-major keeps the descent's per-feature scans contiguous
    Xs = np.asfortranarray(centered / scales)
    return Xs, means, scales


def lambda_grid_for(Xs: np.ndarray, resid: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Descending log-spaced grid from the smallest all-zero lambda."""
    sw = w.sum()
    if Xs.shape[1] == 0:
        return np.array([0.0])
    lam_max = np.max(np.abs(Xs.T @ (w * resid))) / sw
    if not np.isfinite(lam_max) or lam_max <= 0:
        return np.array([0.0])
    return np.geomspace(lam_max, lam_max * LAMBDA_MIN_RATIO, LAMBDA_GRID_SIZE)


@dataclass(frozen=True)
class LassoModel:
    """Fitted penalized linear (or logistic) model.

    coef applies to standardized features; means/scales record the
    training standardization so prediction works on the raw scale.
    """

    intercept: float
    coef: np.ndarray
    means: np.ndarray
    scales: np.ndarray
    lambda_: float
    family: str = "gaussian"

    def linear_predictor(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.coef.shape[0]:
            raise InputError("feature matrix has mismatched column count")
        return self.intercept + ((X - self.means) / self.scales) @ self.coef

    def predict(self, X) -> np.ndarray:
        eta = self.linear_predictor(X)
        if self.family == "binomial":
            return expit(eta)
        return eta

    @property
    def nonzero(self) -> int:
        return int(np.count_nonzero(self.coef))


def _gaussian_path(Xs, yc, w, lams, tol, max_sweeps=MAX_SWEEPS):
    """Warm-started path fit on standardized, centered data."""
    n, p = Xs.shape
    sw = w.sum()
    v = np.ones(p)
    # columns zeroed by standardization contribute nothing
    col_norm = (w @ (Xs * Xs)) / sw
    v[col_norm < 1e-14] = 0.0
    beta = np.zeros(p)
    r = yc.copy()
    out = np.empty((lams.shape[0], p))
    for li in range(lams.shape[0]):
        _cd_passes(Xs, w, sw, v, r, beta, float(lams[li]), tol, max_sweeps)
        out[li] = beta
    return out


def _cv_folds_assign(n: int, folds: int, seed: int) -> np.ndarray:
    folds = max(2, min(folds, n))
    order = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % folds
    return assign


def fit_lasso(
    X,
    y,
    weights=None,
    *,
    lam: float | None = None,
    lambda_grid: np.ndarray | None = None,
    cv_folds: int = 10,
    seed: int = 0,
    tol: float = COORD_TOL,
) -> LassoModel:
    """Weighted lasso regression; lambda chosen by weighted-MSE CV.

    Pass lam to skip selection, or lambda_grid to CV over a fixed grid.
    """
    X = _as_matrix(X)
    y = np.ascontiguousarray(np.asarray(y, dtype=np.float64))
    n = y.shape[0]
    if X.shape[0] != n:
        raise InputError("feature matrix and outcome have mismatched length")
    w = _check_weights(weights, n)

    Xs, means, scales = _standardize(X, w)
    sw = w.sum()
    ybar = float((w @ y) / sw)
    yc = y - ybar

    if X.shape[1] == 0:
        return LassoModel(ybar, np.zeros(0), means, scales, 0.0)

    descent = None
    if lam is None:
        grid = lambda_grid_for(Xs, yc, w) if lambda_grid is None else np.asarray(
            lambda_grid, dtype=np.float64
        )
        if grid.shape[0] == 1:
            lam = float(grid[0])
        else:
            li = _cv_select_gaussian(Xs, yc, w, grid, cv_folds, seed)
            lam = float(grid[li])
            descent = grid[:li]

    p = Xs.shape[1]
    v = np.ones(p)
    col_norm = (w @ (Xs * Xs)) / sw
    v[col_norm < 1e-14] = 0.0
    beta = np.zeros(p)
    r = yc.copy()
    if descent is not None:
        # walk the grid down to the target so the tight solve starts warm
        for lk in descent:
            _cd_passes(Xs, w, sw, v, r, beta, float(lk), tol, MAX_SWEEPS)
    _cd_passes(Xs, w, sw, v, r, beta, float(lam), FINAL_TOL, MAX_SWEEPS)
    return LassoModel(ybar, beta, means, scales, float(lam))


def _cv_select_gaussian(Xs, yc, w, grid, cv_folds, seed) -> int:
    n = yc.shape[0]
    if n < 4:
        return 0
    assign = _cv_folds_assign(n, cv_folds, seed)
    err = np.zeros(grid.shape[0])
    for k in range(assign.max() + 1):
        val = assign == k
        trn = ~val
        wt = w[trn]
        if wt.sum() <= 0 or w[val].sum() <= 0:
            continue
        # re-center within the training part; scales stay global
        off_y = float((wt @ yc[trn]) / wt.sum())
        off_x = (wt @ Xs[trn]) / wt.sum()
        path = _gaussian_path(
            np.asfortranarray(Xs[trn] - off_x), yc[trn] - off_y, wt, grid, CV_TOL
        )
        pred = (Xs[val] - off_x) @ path.T + off_y
        resid = yc[val][:, None] - pred
        err += w[val] @ (resid * resid)
    return int(np.argmin(err))


def kkt_gap(model: LassoModel, X, y, weights=None) -> float:
    """Largest stationarity violation of the fitted gaussian lasso."""
    if model.family != "gaussian":
        raise InputError("kkt_gap applies to the gaussian family")
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    w = _check_weights(weights, y.shape[0])
    sw = w.sum()
    Xs = (X - model.means) / model.scales
    r = y - model.intercept - Xs @ model.coef
    grad = Xs.T @ (w * r) / sw
    lam = model.lambda_
    gap = 0.0
    for j in range(model.coef.shape[0]):
        if model.coef[j] == 0.0:
            gap = max(gap, abs(grad[j]) - lam)
        else:
            gap = max(gap, abs(grad[j] - lam * np.sign(model.coef[j])))
    # intercept optimality
    gap = max(gap, abs(float(w @ r) / sw))
    return float(gap)


def objective_trace(X, y, weights=None, *, lam: float, n_sweeps: int = 25) -> np.ndarray:
    """Objective value before descent and after each full pass.

    Runs single passes of the production kernel so the trace reflects
    exactly what the solver does; useful for monotonicity checks.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    w = _check_weights(weights, y.shape[0])
    Xs, _, _ = _standardize(X, w)
    sw = w.sum()
    ybar = float((w @ y) / sw)
    yc = np.ascontiguousarray(y - ybar)
    p = Xs.shape[1]
    v = np.ones(p)
    beta = np.zeros(p)
    r = yc.copy()

    def obj():
        return float((w @ (r * r)) / (2.0 * sw) + lam * np.abs(beta).sum())

    vals = [obj()]
    for _ in range(n_sweeps):
        _cd_passes(Xs, w, sw, v, r, beta, float(lam), 0.0, 1)
        vals.append(obj())
    return np.array(vals)


def fit_logistic_lasso(
    X,
    y,
    weights=None,
    *,
    lam: float | None = None,
    lambda_grid: np.ndarray | None = None,
    cv_folds: int = 10,
    seed: int = 0,
) -> LassoModel:
    """Penalized logistic regression of a binary y via IRLS + lasso.

    Each IRLS step solves the local weighted least-squares problem with
    the same coordinate-descent kernel; lambda selection minimizes the
    weighted validation deviance over the usual descending grid.
    """
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if X.shape[0] != n:
        raise InputError("feature matrix and outcome have mismatched length")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise InputError("logistic outcome must be binary 0/1")
    if np.all(y == y[0]):
        raise InputError("single-class input: logistic lasso needs both labels")
    w = _check_weights(weights, n)

    Xs, means, scales = _standardize(X, w)
    sw = w.sum()
    pbar = float(np.clip((w @ y) / sw, PROB_CLIP, 1.0 - PROB_CLIP))
    null_intercept = float(np.log(pbar / (1.0 - pbar)))

    if X.shape[1] == 0 or pbar in (PROB_CLIP, 1.0 - PROB_CLIP):
        return LassoModel(null_intercept, np.zeros(X.shape[1]), means, scales, 0.0, "binomial")

    if lam is None:
        if lambda_grid is None:
            lam_max = float(np.max(np.abs(Xs.T @ (w * (y - pbar)))) / sw)
            if not np.isfinite(lam_max) or lam_max <= 0:
                return LassoModel(
                    null_intercept, np.zeros(X.shape[1]), means, scales, 0.0, "binomial"
                )
            grid = np.geomspace(lam_max, lam_max * LAMBDA_MIN_RATIO, LAMBDA_GRID_SIZE)
        else:
            grid = np.asarray(lambda_grid, dtype=np.float64)
        if grid.shape[0] == 1:
            lam = float(grid[0])
        else:
            lam = float(grid[_cv_select_binomial(Xs, y, w, grid, cv_folds, seed)])

    b0, beta = _irls_fit(Xs, y, w, float(lam), null_intercept, np.zeros(Xs.shape[1]))
    return LassoModel(b0, beta, means, scales, float(lam), "binomial")


def _irls_fit(Xs, y, w, lam, b0, beta, max_iter=IRLS_MAX_ITER, tol=1e-8, cd_tol=COORD_TOL):
    """Iteratively reweighted quadratic solves; returns (b0, beta)."""
    sw = w.sum()
    beta = beta.copy()
    for _ in range(max_iter):
        eta = b0 + Xs @ beta
        p = np.clip(expit(eta), PROB_CLIP, 1.0 - PROB_CLIP)
        wq = w * p * (1.0 - p)
        swq = wq.sum()
        if swq <= 0:
            break
        z = eta + (y - p) / (p * (1.0 - p))
        # absorb the unpenalized intercept by wq-centering
        zoff = float((wq @ z) / swq)
        xoff = (wq @ Xs) / swq
        Xc = np.asfortranarray(Xs - xoff)
        v = (wq @ (Xc * Xc)) / swq
        beta_new = beta.copy()
        r = np.ascontiguousarray((z - zoff) - Xc @ beta_new)
        _cd_passes(Xc, wq, swq, v, r, beta_new, lam * sw / swq, cd_tol, MAX_SWEEPS)
        b0_new = zoff - float(xoff @ beta_new)
        delta = max(np.max(np.abs(beta_new - beta), initial=0.0), abs(b0_new - b0))
        b0, beta = b0_new, beta_new
        if delta < tol:
            break
    return b0, beta


def _cv_select_binomial(Xs, y, w, grid, cv_folds, seed) -> int:
    n = y.shape[0]
    if n < 4:
        return 0
    assign = _cv_folds_assign(n, cv_folds, seed)
    dev = np.zeros(grid.shape[0])
    for k in range(assign.max() + 1):
        val = assign == k
        trn = ~val
        wt, wv = w[trn], w[val]
        if wt.sum() <= 0 or wv.sum() <= 0:
            continue
        pbar = float(np.clip((wt @ y[trn]) / wt.sum(), PROB_CLIP, 1.0 - PROB_CLIP))
        b0 = float(np.log(pbar / (1.0 - pbar)))
        beta = np.zeros(Xs.shape[1])
        Xt = np.asfortranarray(Xs[trn])
        for li in range(grid.shape[0]):
            # selection only needs the deviance ranking, so each grid point
            # takes a single warm-started quadratic step, solved loosely
            b0, beta = _irls_fit(
                Xt, y[trn], wt, float(grid[li]), b0, beta, max_iter=1, cd_tol=CV_TOL
            )
            p = np.clip(expit(b0 + Xs[val] @ beta), PROB_CLIP, 1.0 - PROB_CLIP)
            dev[li] += -2.0 * float(
                wv @ (y[val] * np.log(p) + (1.0 - y[val]) * np.log1p(-p))
            )
    return int(np.argmin(dev))
