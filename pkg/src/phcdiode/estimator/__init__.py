"""Least-squares engine and the device fit models."""
from .lm import FitResult, ModelEvaluationError, fd_jacobian, least_squares
from .models import (
    AntibunchingDip,
    BiexpIRF,
    CurveFitEstimator,
    LorentzianPeak,
    StarkLine,
    antibunching_model,
    exp_gauss_survival,
    fit_biexp_irf,
    fit_g2,
    fit_lorentzian,
    fit_stark,
    lorentzian_jacobian,
    lorentzian_model,
)

__all__ = [
    "AntibunchingDip", "BiexpIRF", "CurveFitEstimator", "FitResult", "LorentzianPeak",
    "ModelEvaluationError", "StarkLine", "antibunching_model", "exp_gauss_survival",
    "fd_jacobian", "fit_biexp_irf", "fit_g2", "fit_lorentzian", "fit_stark",
    "least_squares", "lorentzian_jacobian", "lorentzian_model",
]
