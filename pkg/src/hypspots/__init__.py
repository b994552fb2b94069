"""Finite element tools for Neumann and mixed eigenproblems on hyperbolic domains."""

__version__ = "0.1.0"

from .geometry import DiskPoint, MobiusIsometry, hyp_distance  # noqa: F401
from .mesh import DomainSpec, TriMesh, triangulate  # noqa: F401
from .eigen import EigenPairs, solve_mesh  # noqa: F401
from .special import disk_mu2, eval_J, threshold_radius  # noqa: F401
