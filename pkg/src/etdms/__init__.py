"""Variable-step stabilized ETD multistep schemes for gradient flows, with the
no-slope-selection thin-film model as the worked instance."""

__version__ = "0.1.0"

from .coefficients import LagrangeWindow, StabilizationConfig, lagrange_window, stabilization
from .etd import ModeDecay, SchemeState, StepResult, etd1_step, etdms_step, interval_seminorms, phi
from .nss import NssParams, energy, modified_energy, nonlinear_term
from .solver import integrate
from .spectral import PeriodicGrid, SpectralField, dealias, to_physical, to_spectral
from .time_mesh import TimeMesh, perturbed_uniform, refine, uniform, validate_ratio

__all__ = [
    "LagrangeWindow",
    "ModeDecay",
    "NssParams",
    "PeriodicGrid",
    "SchemeState",
    "SpectralField",
    "StabilizationConfig",
    "StepResult",
    "TimeMesh",
    "energy",
    "dealias",
    "etd1_step",
    "etdms_step",
    "integrate",
    "interval_seminorms",
    "lagrange_window",
    "modified_energy",
    "nonlinear_term",
    "perturbed_uniform",
    "phi",
    "refine",
    "stabilization",
    "to_physical",
    "to_spectral",
    "uniform",
    "validate_ratio",
]
