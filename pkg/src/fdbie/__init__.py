"""Finite-difference analog of the double-layer boundary integral equation
for the Dirichlet problem on domains embedded in a Cartesian grid."""

from .domains import ImplicitDomain, make_domain, make_solution
from .errors import ConfigError, FieldError, GeometryError, OperatorError, SolverError
from .geometry import GridGeometry, build_geometry

__version__ = "0.1.0"
