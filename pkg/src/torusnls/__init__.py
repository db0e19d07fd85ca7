"""Numerical laboratory for the reduced cubic NLS on a torus of revolution.

The surface metric ds^2 = dx^2 + g(x) dy^2 separates in the angle y, so each
angular Fourier mode k sees a 1D periodic Schroedinger operator
H = -d^2/dx^2 + k^2 g^{-1}(x) on [-pi, pi).  This package computes the
semiclassical ground states of H for a cusp (Lipschitz) and a smooth metric
family, evolves the reduced cubic equation in the eigenbasis of H, measures
the amplitude-dependent frequency modulation of the ground mode, and runs the
two-data Sobolev-quotient experiment that exhibits the resulting instability
of the flow map.
"""

__version__ = "0.1.0"

from .potential import Family, PotentialProfile, Grid, build_grid, potential_values
from .eigensolver import assemble, lowest_eigenpairs, EigenBasis

__all__ = [
    "Family",
    "PotentialProfile",
    "Grid",
    "build_grid",
    "potential_values",
    "assemble",
    "lowest_eigenpairs",
    "EigenBasis",
    "__version__",
]
