"""Time-changed fractional Ornstein-Uhlenbeck numerics.

Subpackages
-----------
fou_analytic   variance, moments and Gaussian densities of the fOU process
bernstein      subordinator models, Levy tails and the generalized Caputo derivative
laplace_num    forward Laplace transforms and Talbot / Gaver-Stehfest inversion
subordination  inverse-subordinator densities and time-changed marginals
simulate       Monte Carlo paths and estimators
fokker_planck  operators and residuals of the generalized Fokker-Planck equation
cli            the ``tcfou`` command-line front end
"""
from .bernstein import ConjugateModel, SubordinatorModel, parse_model
from .errors import (
    DivergenceError,
    DomainError,
    InversionError,
    NonConvergenceError,
    PrecisionError,
    TcfouError,
    UnsupportedModelError,
    ValidationError,
)
from .fou_analytic import FouParams, VarianceProfile, variance, variance_limit
from .subordination import InverseSubordinatorKernel

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "FouParams",
    "VarianceProfile",
    "variance",
    "variance_limit",
    "SubordinatorModel",
    "ConjugateModel",
    "parse_model",
    "InverseSubordinatorKernel",
    "TcfouError",
    "DomainError",
    "ValidationError",
    "UnsupportedModelError",
    "NonConvergenceError",
    "InversionError",
    "PrecisionError",
    "DivergenceError",
]
