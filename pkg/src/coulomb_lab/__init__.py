"""Monte Carlo and PDE laboratory for signed 2D Coulomb particle systems.

Signed particles in the plane interacting through K(x) = x/|x|^2 (equal
signs repel, opposite attract): regularized SDE simulation, the squared
Bessel two-particle reduction, collision/moment estimators, and the
two-species mean-field PDE with weak-form convergence diagnostics.
"""

__version__ = "0.1.0"

from .backend import BACKEND_NAME
from .model import (
    DistanceMode,
    NoPairError,
    SignedConfiguration,
    SystemParams,
    coulomb_kernel,
    cutoff,
    drift,
    min_distance,
    regularized_kernel,
    rescale_params,
)
from .noise import NoiseStream

__all__ = [
    "__version__",
    "BACKEND_NAME",
    "DistanceMode",
    "NoPairError",
    "NoiseStream",
    "SignedConfiguration",
    "SystemParams",
    "coulomb_kernel",
    "cutoff",
    "drift",
    "min_distance",
    "regularized_kernel",
    "rescale_params",
]
