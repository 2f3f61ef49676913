"""Synthetic data generators and the Monte Carlo harness.

Both generators share the dose equation D = X beta + 0.5 U + V with
beta_j = 0.4 / j^2, so covariate importance decays quadratically.  The
outcome effect of dose d against d' at t = 1 is d^2 - d'^2 in both
designs.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

from .model import (
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
)
from .pipeline import estimate_atet

METHODS = {
    "lasso": (1.0, "linear_normal"),
    "lnorm": (1.0, "loglinear_normal"),
    "under": (2.0, "linear_normal"),
    "ln_under": (2.0, "loglinear_normal"),
}


def dose_coefficients(p: int) -> np.ndarray:
    return 0.4 / np.arange(1, p + 1, dtype=np.float64) ** 2


def true_atet(d: float, d_prime: float) -> float:
    return float(d * d - d_prime * d_prime)


def simulate_rcs(n: int, p: int, seed: int) -> RepeatedCrossSectionSample:
    """Repeated cross-sections: the period shifts the covariate levels.

    Draw order is fixed (T, Q, U, V, W) so a seed pins the dataset.
    """
    if n < 1 or p < 1:
        raise InputError("n and p must be >= 1")
    rng = np.random.default_rng(seed)
    t = (rng.random(n) < 0.5).astype(np.float64)
    q = rng.uniform(0.0, 2.0, size=(n, p))
    u = rng.uniform(0.0, 2.0, size=n)
    v = rng.uniform(0.0, 2.0, size=n)
    w = rng.uniform(0.0, 2.0, size=n)
    x = 0.5 * t[:, None] + q
    xb = x @ dose_coefficients(p)
    d = xb + 0.5 * u + v
    y = xb + (1.0 + d * d) * t + u + w
    return RepeatedCrossSectionSample(
        y=y,
        d=d,
        period=t.astype(np.int64),
        history=np.empty((n, 0)),
        x=x,
    )


def simulate_panel(n: int, p: int, seed: int) -> PanelSample:
    """Panel: the fixed effect U is drawn once per unit and differences
    out of the outcome change; the idiosyncratic error W is redrawn
    each period.  Draw order is fixed (X, U, V, W_pre, W_post)."""
    if n < 1 or p < 1:
        raise InputError("n and p must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 2.0, size=(n, p))
    u = rng.uniform(0.0, 2.0, size=n)
    v = rng.uniform(0.0, 2.0, size=n)
    w_pre = rng.uniform(0.0, 2.0, size=n)
    w_post = rng.uniform(0.0, 2.0, size=n)
    xb = x @ dose_coefficients(p)
    d = xb + 0.5 * u + v
    y_pre = u + w_pre
    y_post = 1.0 + d * d + xb + u + w_post
    return PanelSample(
        y_pre=y_pre,
        y_post=y_post,
        d=d,
        history=np.empty((n, 0)),
        x=x,
    )


# kept as named aliases for symmetry with the design flag values
gen_rcs_dgp = simulate_rcs
gen_panel_dgp = simulate_panel


def replication_seed(seed: int, rep: int) -> int:
    """Independent per-replication stream seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(f"rep|{int(seed)}|{int(rep)}".encode())
    return int.from_bytes(h.digest(), "big")


@dataclass(frozen=True)
class McSummaryRow:
    method: str
    n: int
    reps: int
    bias: float
    std: float
    rmse: float
    avse: float
    cover: float
    failures: int = 0


def _resolve_workers(workers: int | None) -> int:
    if workers is None:
        raw = os.environ.get("DIDCONT_THREADS", "0")
        try:
            workers = int(raw)
        except ValueError:
            raise InputError(f"DIDCONT_THREADS must be an integer, got {raw!r}") from None
    if workers < 0:
        raise InputError("worker count must be >= 0")
    if workers == 0:
        workers = os.cpu_count() or 1
    return workers


def _one_rep(args):
    design, n, p, rep_seed, undersmooth, family, folds, trim = args
    gen = simulate_panel if design == "panel" else simulate_rcs
    sample = gen(n, p, rep_seed)
    config = EstimationConfig(
        folds=folds,
        undersmooth_factor=undersmooth,
        trim_threshold=trim,
        ps_family=family,
        seed=rep_seed,
    )
    try:
        report = estimate_atet(sample, design, EstimandSpec(3.0, 2.0, t=1), config, alpha=0.05)
    except EstimationError:
        return None
    est = report.estimate
    return est.delta_hat, est.se, est.ci_low, est.ci_high


def monte_carlo(
    design: str,
    n: int,
    p: int,
    reps: int,
    method: str,
    *,
    seed: int = 0,
    folds: int = 3,
    trim: float = 0.1,
    workers: int | None = None,
) -> McSummaryRow:
    """Replicate generate -> estimate -> infer and summarize.

    Failed replications are dropped; more than 5% of them aborts the
    run.  Per-replication seeds derive from (seed, index), so the
    summary does not depend on execution order or worker count.
    """
    if design not in ("rcs", "panel"):
        raise InputError(f"design must be 'rcs' or 'panel', got {design!r}")
    if reps < 2:
        raise InputError("reps ≥ 2")
    if method not in METHODS:
        raise InputError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    undersmooth, family = METHODS[method]
    args = [
        (design, n, p, replication_seed(seed, r), undersmooth, family, folds, trim)
        for r in range(reps)
    ]
    n_workers = _resolve_workers(workers)
    if n_workers > 1:
        import multiprocessing

        with multiprocessing.Pool(n_workers) as pool:
            results = pool.map(_one_rep, args, chunksize=1)
    else:
        results = [_one_rep(a) for a in args]

    kept = [r for r in results if r is not None]
    failures = reps - len(kept)
    if failures > 0.05 * reps:
        raise EstimationError(
            f"replication failure rate above 5%: {failures} of {reps} replications failed"
        )

    truth = true_atet(3.0, 2.0)
    deltas = np.array([r[0] for r in kept])
    ses = np.array([r[1] for r in kept])
    lows = np.array([r[2] for r in kept])
    highs = np.array([r[3] for r in kept])
    bias = float(np.mean(deltas) - truth)
    std = float(np.std(deltas))  # ddof=0 keeps rmse^2 = bias^2 + std^2 exact
    rmse = float(np.sqrt(np.mean((deltas - truth) ** 2)))
    cover = float(np.mean((lows <= truth) & (truth <= highs)))
    return McSummaryRow(
        method=method,
        n=n,
        reps=reps,
        bias=bias,
        std=std,
        rmse=rmse,
        avse=float(np.mean(ses)),
        cover=cover,
        failures=failures,
    )
