"""Kernel weights that localize estimation around a target dose."""

from __future__ import annotations

import numpy as np

from .model import InputError


def epanechnikov(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def gaussian(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    return np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)


_KERNELS = {"epanechnikov": epanechnikov, "gaussian": gaussian}


def kernel_function(name: str):
    try:
        return _KERNELS[name]
    except KeyError:
        raise InputError(f"unknown kernel family {name!r}") from None


def kernel_weights(d, dose: float, bandwidth: float, kernel: str = "epanechnikov") -> np.ndarray:
    """omega(D; dose, h) = K((D - dose)/h) / h evaluated elementwise."""
    if not bandwidth > 0:
        raise InputError("bandwidth must be > 0")
    k = kernel_function(kernel)
    d = np.asarray(d, dtype=np.float64)
    return k((d - dose) / bandwidth) / bandwidth


def resolve_bandwidth(config, n: int) -> float:
    """The bandwidth actually used: explicit, else rule of thumb."""
    if config.bandwidth is not None:
        return float(config.bandwidth)
    return rule_of_thumb_bandwidth(n, config.undersmooth_factor)


def rule_of_thumb_bandwidth(n: int, undersmooth_factor: float = 1.0) -> float:
    """Silverman-style rate for kernel dose localization.

    The n^(-1/4) rate deliberately smooths more than the pointwise
    -optimal n^(-1/5); undersmooth_factor > 1 shrinks it further so the
    smoothing bias becomes asymptotically negligible for inference.
    """
    if n < 1:
        raise InputError("sample size must be >= 1")
    if not undersmooth_factor > 0:
        raise InputError("undersmooth_factor must be > 0")
    return 2.34 * float(n) ** (-0.25) / undersmooth_factor
