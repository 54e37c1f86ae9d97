"""Meshfree peridynamic correspondence modeling toolkit.

Builds higher-order nonlocal gradient operators on point clouds
(reproducing-kernel and moving-least-squares routes), stabilizes them
with bond-associated kinematics, enforces stress boundary conditions
through a two-neighborhood scheme, and ships the 1D wave-dispersion
and 2D elastostatic verification studies as runnable benchmarks.
"""

from ._backend import backend_name
from .correspondence import Material
from .errors import (
    CloudFormatError,
    NumericalError,
    SingularSystemError,
    UnisolvencyError,
    ValidationError,
)
from .formulation import Formulation
from .pointcloud import NodeKind, PointCloud

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "CloudFormatError",
    "Formulation",
    "Material",
    "NodeKind",
    "NumericalError",
    "PointCloud",
    "SingularSystemError",
    "UnisolvencyError",
    "ValidationError",
    "__version__",
]
