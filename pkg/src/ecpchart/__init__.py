"""Misclassification-corrected EWMA p control charts."""

__version__ = "0.1.0"

from .chart import (
    ChartConfig,
    ChartLimits,
    EwmaState,
    Variant,
    ewma_update,
    make_limits,
    np_limits,
    theorem1_moments,
    ucl_at,
)
from .engine import (
    ArlEstimate,
    CalibrationResult,
    ShiftSpec,
    calibrate_l,
    estimate_arl,
    make_shift,
    simulate_run_length,
)
from .errors import CalibrationError, ChartError, DataError, SingularMatrixError, ValidationError
from .misclass import (
    MisclassMatrix,
    ValidationCounts,
    correct_observation,
    correct_proportion,
    estimate_pi,
    mix_proportion,
    pi_from_rr,
)
from .monitor import ChartSeries, CountSeries, ingest_counts, render_chart, run_chart

__all__ = [
    "ArlEstimate", "CalibrationError", "CalibrationResult", "ChartConfig", "ChartError", "ChartLimits",
    "ChartSeries", "CountSeries", "DataError", "EwmaState", "MisclassMatrix", "ShiftSpec", "SingularMatrixError",
    "ValidationCounts", "ValidationError", "Variant", "calibrate_l", "correct_observation", "correct_proportion",
    "estimate_arl", "estimate_pi", "ewma_update", "ingest_counts", "make_limits", "make_shift", "mix_proportion",
    "np_limits", "pi_from_rr", "render_chart", "run_chart", "simulate_run_length", "theorem1_moments", "ucl_at",
]
