"""Initial-value PDE solving by evolving neural-network parameters.

The solution u(x, t) = N(x, theta(t)) is represented by a fixed network whose
parameters follow the regularized least-squares dynamics of the PDE residual,
solved matrix-free with preconditioned conjugate gradients and integrated by
embedded adaptive Runge-Kutta pairs.
"""

from .config import RunConfig, load_config, resolve_config
from .dynamics import SolverConfig, Trajectory, evolve, mass_operator, rhs_vector, theta_dot
from .errors import ConfigError, DomainError, NumericalError, PdeflowError
from .fitting import fit_function, head_tune, restart_refit
from .network import NetworkSpec, SpatialJet, embed, forward, init_params, param_jvp, param_vjp, spatial_jet

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DomainError",
    "NetworkSpec",
    "NumericalError",
    "PdeflowError",
    "RunConfig",
    "SolverConfig",
    "SpatialJet",
    "Trajectory",
    "embed",
    "evolve",
    "fit_function",
    "forward",
    "head_tune",
    "init_params",
    "load_config",
    "mass_operator",
    "param_jvp",
    "param_vjp",
    "resolve_config",
    "restart_refit",
    "rhs_vector",
    "spatial_jet",
    "theta_dot",
]
