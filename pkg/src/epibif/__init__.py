"""Backward bifurcations in epidemic models.

Built-in models, next-generation-matrix R0, center-manifold coefficients,
steady-state enumeration, arclength continuation with fold detection and
parameter constructions that exhibit two positive steady states below
threshold.
"""

from .bifcoeffs import BifurcationError, CenterCoefficients, NullPair, center_coefficients, classify, null_pair
from .continuation import Branch, FoldPoint, fold_locus, fold_points, trace, trace_both
from .models import ModelError, ModelSystem, available_models, get_model, sample_params
from .ngm import r0
from .recipes import RecipeReport
from .spec_loader import load_model
from .steadystate import SteadyState, parity_audit

__version__ = "0.1.0"

__all__ = [
    "BifurcationError", "Branch", "CenterCoefficients", "FoldPoint", "ModelError", "ModelSystem", "NullPair",
    "RecipeReport", "SteadyState", "available_models", "center_coefficients", "classify", "fold_locus",
    "fold_points", "get_model", "load_model", "null_pair", "parity_audit", "r0", "sample_params", "trace",
    "trace_both",
]
