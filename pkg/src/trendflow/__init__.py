"""Polynomial dynamical-system models for multivariate time series.

Fit cross-coupled polynomial vector fields to sampled data, benchmark their
one-step forecasts against VAR baselines with an expanding-window protocol,
and analyze the fitted flow (fixed points, basins, separatrices, trending).
"""
from .forecast import EvalReport, compare, nse, walk_forward
from .field import Domain, PolyVectorField, evaluate, jacobian
from .fit import fit, fit_frame, select_degree
from .integrate import advance, trajectory
from .kernels import BACKEND
from .portrait import (
    basin_and_separatrix,
    classify_fixed_point,
    find_fixed_points,
    trending_check,
)
from .series import (
    DerivativeSamples,
    ScalingSpec,
    SeriesFrame,
    estimate_derivatives,
    load_csv,
    normalize_by_exogenous,
    rescale,
    split,
)
from .var import VarModel, fit_var, predict_one, select_lag

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DerivativeSamples",
    "Domain",
    "EvalReport",
    "PolyVectorField",
    "ScalingSpec",
    "SeriesFrame",
    "VarModel",
    "advance",
    "basin_and_separatrix",
    "classify_fixed_point",
    "compare",
    "estimate_derivatives",
    "evaluate",
    "find_fixed_points",
    "fit",
    "fit_frame",
    "fit_var",
    "jacobian",
    "load_csv",
    "normalize_by_exogenous",
    "nse",
    "predict_one",
    "rescale",
    "select_degree",
    "select_lag",
    "split",
    "trajectory",
    "trending_check",
    "walk_forward",
]
