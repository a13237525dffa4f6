"""Asymptotic Bayes risk of semi-supervised multitask classification on Gaussian mixtures."""

__version__ = "0.1.0"

from .model import EnsembleConfig, ValidatedEnsemble, effective_matrices, validate  # noqa: E402
from .solver import Overlaps, RiskReport, SolverOptions, risk_report, solve  # noqa: E402

__all__ = [
    "EnsembleConfig",
    "Overlaps",
    "RiskReport",
    "SolverOptions",
    "ValidatedEnsemble",
    "effective_matrices",
    "risk_report",
    "solve",
    "validate",
]
