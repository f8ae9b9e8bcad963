"""Quantile regression of latent longitudinal trajectory features.

Stage one fits a polynomial trajectory per subject; stage two regresses the
estimated feature on covariates with a measurement-error corrected, smoothed
check loss.
"""

from ._ltqr import (
    Dataset,
    Draws,
    FitResult,
    LtqrError,
    average_effect,
    constancy_test,
    extrapolate_bandwidth,
    fit,
    naive_qr,
    read_dataset,
    resample,
    rho_corrected,
    rho_smooth,
    rho_tau,
    select_bandwidth,
    simulate,
    true_beta,
)

__all__ = [
    "Dataset",
    "Draws",
    "FitResult",
    "LtqrError",
    "average_effect",
    "constancy_test",
    "extrapolate_bandwidth",
    "fit",
    "naive_qr",
    "read_dataset",
    "resample",
    "rho_corrected",
    "rho_smooth",
    "rho_tau",
    "select_bandwidth",
    "simulate",
    "true_beta",
]
