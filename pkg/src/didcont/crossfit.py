"""Fold construction and cross-fitted nuisance estimation.

Every row's nuisance predictions come from models trained on the
complement of its fold; fold predictions are stacked back in original
row order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import resolve_bandwidth
from .model import (
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
)
from .nuisance import (
    PanelNuisances,
    RcsNuisances,
    estimate_nuisances_panel,
    estimate_nuisances_rcs,
    slot_seed,
)

_FOLD_TAG = 0x666F6C64


@dataclass(frozen=True)
class FoldAssignment:
    fold_of: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.fold_of, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "fold_of", arr)

    @property
    def n_folds(self) -> int:
        return int(self.fold_of.max()) + 1


def split_folds(n: int, folds: int, seed: int) -> FoldAssignment:
    """Uniform random partition into folds of near-equal size."""
    if folds < 2:
        raise InputError("folds must be an integer >= 2")
    if n < folds:
        raise InputError(f"cannot split {n} observations into {folds} folds")
    rng = np.random.default_rng(np.random.SeedSequence([_FOLD_TAG, int(seed), int(n), int(folds)]))
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[order] = np.arange(n) % folds
    return FoldAssignment(fold_of)


def crossfit_nuisances(
    sample,
    estimand: EstimandSpec,
    config: EstimationConfig,
    bandwidth: float | None = None,
    fold_of: np.ndarray | None = None,
):
    """Train per fold on the complement, predict the fold, stack.

    Passing fold_of pins the partition (it must assign every row a
    fold in [0, K)); otherwise folds come from split_folds with the
    configured seed.
    """
    panel = isinstance(sample, PanelSample)
    if not panel and not isinstance(sample, RepeatedCrossSectionSample):
        raise InputError("sample must be a validated panel or repeated cross-section")
    n = sample.n
    if fold_of is None:
        fold_of = split_folds(n, config.folds, config.seed).fold_of
    else:
        fold_of = np.asarray(fold_of, dtype=np.int64)
        if fold_of.shape != (n,):
            raise InputError("fold assignment has mismatched length")

    h = resolve_bandwidth(config, n) if bandwidth is None else float(bandwidth)
    controls = sample.controls()
    cls = PanelNuisances if panel else RcsNuisances
    fit = estimate_nuisances_panel if panel else estimate_nuisances_rcs
    stacked = {name: np.empty(n) for name in cls.SLOTS}

    for k in range(int(fold_of.max()) + 1):
        mask = fold_of == k
        if not np.any(mask):
            continue
        train = sample.subset(~mask)
        fold_seed = slot_seed(config.seed, f"fold-{k}")
        try:
            part = fit(train, controls[mask], estimand, config, h, fold_seed)
        except (EstimationError, InputError) as err:
            raise type(err)(f"{err} (fold {k})") from err
        for name in cls.SLOTS:
            stacked[name][mask] = getattr(part, name)

    return cls(**stacked)
