"""Numerical checks of the identities and inequalities behind the estimator."""

from .calibration import build_calibration, calibration_json, load_calibration, shishkin_benchmark
from .fuzz import FAMILIES, FuzzConfig, report_json, run_fuzz, slope_ok
from .representation import ErrorRepresentation, verify_error_representation
from .structured import (
    GbarRecord,
    MinInequality,
    StructuredGrid,
    ThetaRecord,
    check_gbar_bounds,
    check_min_inequality,
    compute_gbar_struct,
    compute_theta,
    detect_structure,
    min_inequality_violations,
)
from .testfunctions import LocalFrame, PolynomialFamily, TestFunction
from .trace import (
    RatioReport,
    check_aux_a,
    check_aux_b,
    check_scaled_trace_L1,
    check_scaled_trace_sq,
    corner,
    divergence_identity_residual,
)

__all__ = [
    "FAMILIES",
    "ErrorRepresentation",
    "FuzzConfig",
    "GbarRecord",
    "LocalFrame",
    "MinInequality",
    "PolynomialFamily",
    "RatioReport",
    "StructuredGrid",
    "TestFunction",
    "ThetaRecord",
    "build_calibration",
    "calibration_json",
    "check_aux_a",
    "check_aux_b",
    "check_gbar_bounds",
    "check_min_inequality",
    "check_scaled_trace_L1",
    "check_scaled_trace_sq",
    "compute_gbar_struct",
    "compute_theta",
    "corner",
    "detect_structure",
    "divergence_identity_residual",
    "load_calibration",
    "min_inequality_violations",
    "report_json",
    "run_fuzz",
    "shishkin_benchmark",
    "slope_ok",
    "verify_error_representation",
]
