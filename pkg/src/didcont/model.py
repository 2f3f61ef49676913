"""Validated dataset containers, estimand and configuration types.

Two data designs are supported: repeated cross-sections (each row is a
unit observed in one of two periods) and panels (each row is a unit with
both a pre- and a post-period outcome).  Dose histories, when present,
are kept in separate columns but always enter estimation concatenated
with the covariates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Mapping

import numpy as np


class InputError(ValueError):
    """User-supplied data or options failed validation."""


class EstimationError(RuntimeError):
    """Estimation cannot proceed on otherwise valid input."""


class EmptyLocalCellError(EstimationError):
    """A (dose, period) training cell received zero kernel weight."""


class EmptyGroupError(EstimationError):
    """A score group has zero total weight before trimming."""


class TrimmingError(EstimationError):
    """Trimming removed every observation from a score group."""


KERNEL_FAMILIES = ("epanechnikov", "gaussian")
PS_FAMILIES = ("linear_normal", "loglinear_normal")


@dataclass(frozen=True)
class EstimandSpec:
    """Dose contrast d_treat vs d_control on the outcome of period t.

    lag = s >= 1 targets the effect of the dose assigned s periods
    before t; the baseline period is then t - s - 1.  lag = 0 is the
    same-period contrast with baseline t - 1.
    """

    d_treat: float
    d_control: float
    t: int = 1
    lag: int = 0

    def __post_init__(self):
        if not np.isfinite(self.d_treat) or self.d_treat <= 0:
            raise InputError("d_treat must be a finite dose > 0")
        if not np.isfinite(self.d_control):
            raise InputError("d_control must be a finite dose")
        if self.d_control < 0:
            raise InputError("negative dose for d_control")
        if self.t != int(self.t):
            raise InputError("t must be an integer period label")
        if self.lag != int(self.lag) or self.lag < 0:
            raise InputError("lag must be a non-negative integer")

    @property
    def pre_period(self) -> int:
        return self.t - self.lag - 1


@dataclass(frozen=True)
class EstimationConfig:
    folds: int = 3
    kernel: str = "epanechnikov"
    bandwidth: float | None = None
    undersmooth_factor: float = 1.0
    trim_threshold: float = 0.1
    ps_family: str = "linear_normal"
    lasso_cv_folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.folds < 2 or self.folds != int(self.folds):
            raise InputError("folds must be an integer >= 2")
        if self.kernel not in KERNEL_FAMILIES:
            raise InputError(f"unknown kernel family {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InputError("bandwidth must be > 0 when given")
        if not self.undersmooth_factor > 0:
            raise InputError("undersmooth_factor must be > 0")
        if not 0 < self.trim_threshold <= 1:
            raise InputError("trim_threshold must lie in (0, 1]")
        if self.ps_family not in PS_FAMILIES:
            raise InputError(f"unknown ps_family {self.ps_family!r}")
        if self.lasso_cv_folds < 2 or self.lasso_cv_folds != int(self.lasso_cv_folds):
            raise InputError("lasso_cv_folds must be an integer >= 2")
        if self.seed < 0 or self.seed != int(self.seed):
            raise InputError("seed must be a non-negative integer")


def _frozen(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RepeatedCrossSectionSample:
    """Repeated cross-sections: one outcome per row, two period labels.

    history columns hold doses from earlier periods; history_lags[j] is
    the number of periods column j precedes the outcome period by.
    """

    y: np.ndarray
    d: np.ndarray
    period: np.ndarray
    history: np.ndarray
    x: np.ndarray
    history_lags: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(self.y))
        object.__setattr__(self, "d", _frozen(self.d))
        object.__setattr__(self, "period", _frozen(self.period, np.int64))
        object.__setattr__(self, "history", _frozen(np.atleast_2d(self.history)))
        object.__setattr__(self, "x", _frozen(np.atleast_2d(self.x)))
        _check_sample_arrays(self)
        if len(self.history_lags) != self.history.shape[1]:
            raise InputError("history_lags must label every history column")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def controls(self) -> np.ndarray:
        return np.hstack([self.history, self.x])

    def subset(self, index) -> "RepeatedCrossSectionSample":
        return RepeatedCrossSectionSample(
            y=self.y[index],
            d=self.d[index],
            period=self.period[index],
            history=self.history[index],
            x=self.x[index],
            history_lags=self.history_lags,
        )


@dataclass(frozen=True, eq=False)
class PanelSample:
    """Panel: each row carries both period outcomes for one unit."""

    y_pre: np.ndarray
    y_post: np.ndarray
    d: np.ndarray
    history: np.ndarray
    x: np.ndarray
    history_lags: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "y_pre", _frozen(self.y_pre))
        object.__setattr__(self, "y_post", _frozen(self.y_post))
        object.__setattr__(self, "d", _frozen(self.d))
        object.__setattr__(self, "history", _frozen(np.atleast_2d(self.history)))
        object.__setattr__(self, "x", _frozen(np.atleast_2d(self.x)))
        _check_sample_arrays(self, panel=True)
        if len(self.history_lags) != self.history.shape[1]:
            raise InputError("history_lags must label every history column")

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def controls(self) -> np.ndarray:
        return np.hstack([self.history, self.x])

    def subset(self, index) -> "PanelSample":
        return PanelSample(
            y_pre=self.y_pre[index],
            y_post=self.y_post[index],
            d=self.d[index],
            history=self.history[index],
            x=self.x[index],
            history_lags=self.history_lags,
        )


def _check_sample_arrays(sample, panel: bool = False) -> None:
    n = sample.d.shape[0]
    if n == 0:
        raise InputError("sample is empty")
    outcome_fields = ("y_pre", "y_post") if panel else ("y",)
    for name in outcome_fields:
        col = getattr(sample, name)
        if col.shape != (n,):
            raise InputError(f"column {name} has mismatched length")
        if not np.all(np.isfinite(col)):
            raise InputError(f"non-finite outcome in column {name}")
    if sample.d.shape != (n,):
        raise InputError("column d has mismatched length")
    if not np.all(np.isfinite(sample.d)):
        raise InputError("non-finite dose in column d")
    if np.any(sample.d < 0):
        raise InputError("negative dose in column d")
    for mat, label in ((sample.history, "d_lag"), (sample.x, "x")):
        if mat.size and mat.shape[0] != n:
            raise InputError(f"{label} columns have mismatched length")
        if not np.all(np.isfinite(mat)):
            raise InputError(f"non-finite value in {label} columns")
    if np.any(sample.history < 0):
        raise InputError("negative dose in history columns")
    if not panel:
        if sample.period.shape != (n,):
            raise InputError("column t has mismatched length")


_LAG_PATTERN = re.compile(r"^d_lag([1-9]\d*)$")
_X_PATTERN = re.compile(r"^x([1-9]\d*)$")


def _table_columns(table) -> dict[str, np.ndarray]:
    if hasattr(table, "columns"):  # pandas-style
        names = [str(c) for c in table.columns]
        return {c: np.asarray(table[c]) for c in names}
    if isinstance(table, Mapping):
        return {str(k): np.asarray(v) for k, v in table.items()}
    raise InputError("raw table must be a DataFrame or a mapping of columns")


def _classify_columns(cols: dict, required: tuple[str, ...]):
    """Split header into required, d_lag* and x* groups; reject strays."""
    for name in required:
        if name not in cols:
            raise InputError(f"missing column {name!r}")
    lag_idx, x_idx = [], []
    for name in cols:
        if name in required:
            continue
        m = _LAG_PATTERN.match(name)
        if m:
            lag_idx.append(int(m.group(1)))
            continue
        m = _X_PATTERN.match(name)
        if m:
            x_idx.append(int(m.group(1)))
            continue
        raise InputError(f"unrecognized column {name!r}")
    lag_idx.sort()
    x_idx.sort()
    if x_idx and x_idx != list(range(1, len(x_idx) + 1)):
        raise InputError("x columns must be numbered x1..xP without gaps")
    if len(set(lag_idx)) != len(lag_idx):
        raise InputError("duplicate d_lag column")
    return lag_idx, x_idx


def _column_matrix(cols, names) -> np.ndarray:
    n = len(next(iter(cols.values()))) if cols else 0
    if not names:
        return np.empty((n, 0))
    lengths = {len(cols[c]) for c in names}
    if len(lengths) > 1:
        raise InputError("mismatched column lengths")
    return np.column_stack([np.asarray(cols[c], dtype=np.float64) for c in names])


def validate_rcs(table, estimand: EstimandSpec | None = None) -> RepeatedCrossSectionSample:
    """Validate a column-labeled table as a repeated cross-section sample.

    With an estimand, rows are restricted to the two relevant period
    labels (t and t - lag - 1); without one the table must contain
    exactly two distinct periods.
    """
    if isinstance(table, RepeatedCrossSectionSample):
        return table
    cols = _table_columns(table)
    lag_idx, x_idx = _classify_columns(cols, required=("y", "d", "t"))
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise InputError("mismatched column lengths")

    period_raw = np.asarray(cols["t"], dtype=np.float64)
    if not np.all(np.isfinite(period_raw)):
        raise InputError("non-finite value in column t")
    if np.any(period_raw != np.round(period_raw)):
        raise InputError("period labels in column t must be integers")
    period = period_raw.astype(np.int64)

    keep = np.ones(period.shape[0], dtype=bool)
    if estimand is not None:
        wanted = (estimand.t, estimand.pre_period)
        for label in wanted:
            if not np.any(period == label):
                raise InputError(
                    f"required period {label} absent; the table needs two periods"
                )
        keep = np.isin(period, wanted)
    labels = np.unique(period[keep])
    if labels.size < 2:
        raise InputError(f"table needs two periods; found labels {labels.tolist()}")
    if labels.size > 2:
        raise InputError(
            "table needs two periods; pass an estimand to select among "
            f"labels {labels.tolist()}"
        )

    return RepeatedCrossSectionSample(
        y=np.asarray(cols["y"], dtype=np.float64)[keep],
        d=np.asarray(cols["d"], dtype=np.float64)[keep],
        period=period[keep],
        history=_column_matrix(cols, [f"d_lag{j}" for j in lag_idx])[keep],
        x=_column_matrix(cols, [f"x{j}" for j in x_idx])[keep],
        history_lags=tuple(lag_idx),
    )


def validate_panel(table, estimand: EstimandSpec | None = None) -> PanelSample:
    """Validate a column-labeled table as a panel sample."""
    if isinstance(table, PanelSample):
        return table
    cols = _table_columns(table)
    lag_idx, x_idx = _classify_columns(cols, required=("y_pre", "y_post", "d"))
    lengths = {len(v) for v in cols.values()}
    if len(lengths) > 1:
        raise InputError("mismatched column lengths")
    return PanelSample(
        y_pre=np.asarray(cols["y_pre"], dtype=np.float64),
        y_post=np.asarray(cols["y_post"], dtype=np.float64),
        d=np.asarray(cols["d"], dtype=np.float64),
        history=_column_matrix(cols, [f"d_lag{j}" for j in lag_idx]),
        x=_column_matrix(cols, [f"x{j}" for j in x_idx]),
        history_lags=tuple(lag_idx),
    )


def relabel_lagged(sample, estimand: EstimandSpec):
    """Reduce a lagged estimand (lag = s >= 1) to the unlagged form.

    The baseline period t - s - 1 is relabeled t - 1 and history lags
    are shifted so they are again relative to the treatment period.
    History columns with lag <= s refer to periods at or after the
    treatment period and are rejected.
    """
    s = estimand.lag
    if s == 0:
        return sample, estimand
    leaky = [j for j in sample.history_lags if j <= s]
    if leaky:
        cols = ", ".join(f"d_lag{j}" for j in leaky)
        raise InputError(f"history leaks post-treatment doses (columns {cols})")
    new_lags = tuple(j - s for j in sample.history_lags)
    flat = replace(estimand, lag=0)
    if isinstance(sample, PanelSample):
        # y_pre is trusted to be the period t-s-1 outcome
        out = PanelSample(
            y_pre=sample.y_pre,
            y_post=sample.y_post,
            d=sample.d,
            history=sample.history,
            x=sample.x,
            history_lags=new_lags,
        )
        return out, flat
    pre_old, pre_new = estimand.pre_period, estimand.t - 1
    for label in (estimand.t, pre_old):
        if not np.any(sample.period == label):
            raise InputError(f"required period {label} absent")
    period = np.where(sample.period == pre_old, pre_new, sample.period)
    out = RepeatedCrossSectionSample(
        y=sample.y,
        d=sample.d,
        period=period,
        history=sample.history,
        x=sample.x,
        history_lags=new_lags,
    )
    return out, flat
