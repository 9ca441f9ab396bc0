"""Measurement harness: gradient checks, error ratios, compression reports, CLI."""
from .gradcheck import finite_diff_gradient, relative_error
from .report import compression_report
from .validation import (
    ErrorReport, exact_gradient, measure_fullbatch_error, measure_step_error, quantized_gradient,
    run_validation,
)
