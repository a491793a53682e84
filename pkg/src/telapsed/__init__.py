"""Numerical lab for the nonlinear time-elapsed neuron population model."""
from .errors import NumericalError, TailError
from .grid import Density, Grid, project
from .model import RateModel
from .steadystate import fixed_point_phi, phi, stationary_density

__all__ = [
    "Density", "Grid", "NumericalError", "RateModel", "TailError",
    "fixed_point_phi", "phi", "project", "stationary_density",
]
__version__ = "0.1.0"
