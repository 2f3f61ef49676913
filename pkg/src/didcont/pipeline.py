"""End-to-end estimation: validate, cross-fit, estimate, infer."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .crossfit import crossfit_nuisances, split_folds
from .estimator import AtetEstimate, atet_panel, atet_rcs
from .inference import ci_asymptotic, compute_scores, multiplier_bootstrap, variance_hat
from .kernels import resolve_bandwidth
from .model import (
    EstimandSpec,
    EstimationConfig,
    InputError,
    relabel_lagged,
    validate_panel,
    validate_rcs,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunReport:
    """One estimation run: inputs echoed, estimate, and bookkeeping.

    duration_s is wall-clock time and is withheld from the machine
    serialization so identical runs produce identical records.
    """

    design: str
    estimand: EstimandSpec
    config: EstimationConfig
    estimate: AtetEstimate
    alpha: float
    n: int
    bootstrap_b: int = 0
    boot_ci_low: float | None = None
    boot_ci_high: float | None = None
    duration_s: float | None = None
    schema_version: int = SCHEMA_VERSION

    def to_record(self) -> dict:
        rec = {
            "schema_version": self.schema_version,
            "design": self.design,
            "estimand": asdict(self.estimand),
            "config": asdict(self.config),
            "n": self.n,
            "alpha": self.alpha,
            "estimate": asdict(self.estimate),
            "bootstrap_b": self.bootstrap_b,
            "boot_ci_low": self.boot_ci_low,
            "boot_ci_high": self.boot_ci_high,
            "duration_s": None,
        }
        rec["estimate"]["n_trimmed_per_group"] = list(self.estimate.n_trimmed_per_group)
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RunReport":
        est = dict(rec["estimate"])
        est["n_trimmed_per_group"] = tuple(est["n_trimmed_per_group"])
        return cls(
            design=rec["design"],
            estimand=EstimandSpec(**rec["estimand"]),
            config=EstimationConfig(**rec["config"]),
            estimate=AtetEstimate(**est),
            alpha=rec["alpha"],
            n=rec["n"],
            bootstrap_b=rec["bootstrap_b"],
            boot_ci_low=rec["boot_ci_low"],
            boot_ci_high=rec["boot_ci_high"],
            duration_s=rec["duration_s"],
            schema_version=rec["schema_version"],
        )


def estimate_atet(
    data,
    design: str,
    estimand: EstimandSpec,
    config: EstimationConfig | None = None,
    bootstrap: int = 0,
    alpha: float = 0.05,
) -> RunReport:
    """Run the full cross-fitted DR pipeline on a validated dataset.

    data may be a DataFrame, a column mapping, or an already-validated
    sample of the matching design.  bootstrap > 0 adds a multiplier
    bootstrap interval with that many draws.
    """
    started = time.perf_counter()
    if config is None:
        config = EstimationConfig()
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    if design == "rcs":
        sample = validate_rcs(data, estimand)
    elif design == "panel":
        sample = validate_panel(data, estimand)
    else:
        raise InputError(f"design must be 'rcs' or 'panel', got {design!r}")
    sample, flat = relabel_lagged(sample, estimand)

    h = resolve_bandwidth(config, sample.n)
    fold_of = split_folds(sample.n, config.folds, config.seed).fold_of
    nuisances = crossfit_nuisances(sample, flat, config, bandwidth=h, fold_of=fold_of)
    if design == "panel":
        est = atet_panel(sample, nuisances, flat, config, bandwidth=h)
    else:
        est = atet_rcs(sample, nuisances, flat, config, bandwidth=h)

    scores = compute_scores(sample, nuisances, flat, config, est.delta_hat, bandwidth=h)
    sigma2 = variance_hat(scores)
    low, high = ci_asymptotic(est.delta_hat, sigma2, sample.n, alpha)
    est = replace(
        est,
        se=float(np.sqrt(sigma2 / sample.n)),
        ci_low=low,
        ci_high=high,
    )

    boot_low = boot_high = None
    if bootstrap:
        boot_low, boot_high = multiplier_bootstrap(scores, bootstrap, alpha, config.seed)

    return RunReport(
        design=design,
        estimand=estimand,
        config=config,
        estimate=est,
        alpha=alpha,
        n=sample.n,
        bootstrap_b=int(bootstrap),
        boot_ci_low=boot_low,
        boot_ci_high=boot_high,
        duration_s=time.perf_counter() - started,
    )
