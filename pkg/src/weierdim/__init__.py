"""Escaping parameters of the family beta * wp on pole-critical lattices.

The subpackages follow the pipeline: lattices and their invariants, a
Weierstrass evaluator with float and arbitrary-precision paths, the dynamics of
g_beta = beta * wp and the parameter maps h_n, the construction of nested
cylinder families in parameter space, and the dimension bounds they imply.
"""

__version__ = "0.1.0"

from .cantor import BuildConstants, Cylinder, CylinderTree, Segment, build_family, choose_constants, escaping_parameter
from .dimension import DimensionBound, NestedFamilySpec, analytic_bound, consistency_check, mcmullen_bound
from .dynamics import OrbitStatus, h_n, orbit
from .lattice import Lattice, invariants, make_pole_critical_lattice, triangular_lattice
from .weierstrass import EllipticEvaluator, critical_points, critical_values, wp, wp_prime

__all__ = [
    "BuildConstants",
    "Cylinder",
    "CylinderTree",
    "DimensionBound",
    "EllipticEvaluator",
    "Lattice",
    "NestedFamilySpec",
    "OrbitStatus",
    "Segment",
    "analytic_bound",
    "build_family",
    "choose_constants",
    "consistency_check",
    "critical_points",
    "critical_values",
    "escaping_parameter",
    "h_n",
    "invariants",
    "make_pole_critical_lattice",
    "mcmullen_bound",
    "orbit",
    "triangular_lattice",
    "wp",
    "wp_prime",
]
