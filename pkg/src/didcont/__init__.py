"""Difference-in-differences estimation with continuous, time-varying doses."""

from .model import (
    EmptyGroupError,
    EmptyLocalCellError,
    EstimandSpec,
    EstimationConfig,
    EstimationError,
    InputError,
    PanelSample,
    RepeatedCrossSectionSample,
    TrimmingError,
    validate_panel,
    validate_rcs,
)
from .pipeline import estimate_atet
from .simulation import monte_carlo, simulate_panel, simulate_rcs

__version__ = "0.1.0"

__all__ = [
    "EstimandSpec",
    "EstimationConfig",
    "EstimationError",
    "EmptyGroupError",
    "EmptyLocalCellError",
    "InputError",
    "PanelSample",
    "RepeatedCrossSectionSample",
    "TrimmingError",
    "estimate_atet",
    "monte_carlo",
    "simulate_panel",
    "simulate_rcs",
    "validate_panel",
    "validate_rcs",
]
