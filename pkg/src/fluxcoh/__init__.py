"""Fluxonium coherence modelling: spectra, noise models, fits and extraction."""

__version__ = "0.1.0"

from .errors import FitError, FluxcohError, SolverError, UnconvergedError, UnidentifiableError, ValidationError
from .qubit import FluxoniumParams, converged_spectrum, matrix_elements, solve_spectrum, spectrum_sweep

__all__ = [
    "FitError",
    "FluxcohError",
    "FluxoniumParams",
    "SolverError",
    "UnconvergedError",
    "UnidentifiableError",
    "ValidationError",
    "converged_spectrum",
    "matrix_elements",
    "solve_spectrum",
    "spectrum_sweep",
]
