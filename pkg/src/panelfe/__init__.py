"""Probit and logit models with unit and/or period fixed effects and bias corrections."""
from .data import PanelData, drop_perfect_classification, lag_pairs, load_csv
from .errors import PanelFEError
from .estimate import CorrectedEstimates, estimate
from .estimator import FitResult, ModelSpec, fit_mle

__all__ = ["PanelData", "load_csv", "drop_perfect_classification", "lag_pairs",
           "PanelFEError", "ModelSpec", "FitResult", "fit_mle", "estimate",
           "CorrectedEstimates"]
__version__ = "0.1.0"
