"""Multiple functional linear regression with group-SCAD variable selection.

Scalar-on-function regression with several curve predictors: principal
component score extraction per predictor, group-SCAD penalized least squares
solved by iterated local quadratic approximation, sandwich-formula pointwise
confidence bands, and GCV selection of the truncation level and penalty.
"""

from mfreg.funcdata import Grid, CurveSet, ResponseVector, load_curves
from mfreg.fpca import EigenSystem, ScoreMatrix, build_design
from mfreg.scad import ScadParams
from mfreg.solver import FitConfig, FitResult, fit, fit_curves, predict
from mfreg.inference import (CoefCovariance, ConfidenceBand,
                             covariance_for_fit, pointwise_band)
from mfreg.tuning import TuningGrid, select, select_curves
from mfreg.simgen import SimConfig, SimMetrics, generate_replicate, run_scenario

__all__ = [
    "Grid",
    "CurveSet",
    "ResponseVector",
    "load_curves",
    "EigenSystem",
    "ScoreMatrix",
    "build_design",
    "ScadParams",
    "FitConfig",
    "FitResult",
    "fit",
    "fit_curves",
    "predict",
    "CoefCovariance",
    "ConfidenceBand",
    "covariance_for_fit",
    "pointwise_band",
    "TuningGrid",
    "select",
    "select_curves",
    "SimConfig",
    "SimMetrics",
    "generate_replicate",
    "run_scenario",
]

__version__ = "0.1.0"
