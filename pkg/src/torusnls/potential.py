"""Metric families on the torus of revolution and the effective 1D potential.

Two canonical metric profiles are supported on the periodic interval
[-pi, pi):

* ``cusp``:   g(x) = (|x| + 1)^{-1}, a Lipschitz metric with its unique
  global maximum at x = 0, giving V(x) = k^2 (|x| + 1);
* ``smooth``: g^{-1}(x) = 2 - cos(x), a smooth even well with a unique
  quadratic minimum at x = 0, giving V(x) = k^2 (2 - cos x).

Both potentials attain their minimum value k^2 exactly at x = 0.  All
functions here are pure and safe for concurrent use.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import NDArray


class Family(str, Enum):
    CUSP = "cusp"
    SMOOTH = "smooth"


@dataclass(frozen=True)
class PotentialProfile:
    """Metric family plus the angular Fourier mode k (the large parameter)."""

    family: Family
    k: int

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or isinstance(self.k, bool):
            raise ValueError("k must be a positive integer")
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "family", Family(self.family))

    def ground_state_scale(self) -> float:
        """Concentration length of the ground state near x = 0.

        k^{-2/3} for the cusp (Airy regime), k^{-1/2} for the smooth well
        (harmonic regime).
        """
        if self.family is Family.CUSP:
            return float(self.k) ** (-2.0 / 3.0)
        return float(self.k) ** (-0.5)


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform periodic grid on [-pi, pi) with quadrature weight h."""

    n: int
    h: float
    x: NDArray[np.float64]


def build_grid(n: int) -> Grid:
    """Build the uniform periodic grid x_i = -pi + i*h, h = 2*pi/n.

    n must be even and at least 16.  The grid is constructed so that x = 0
    is hit exactly (index n//2) and the point set is exactly symmetric under
    x -> -x, which keeps even potentials exactly even in floating point.
    """
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
        raise ValueError("grid size must be an integer")
    if n % 2 != 0:
        raise ValueError("grid size must be even")
    if n < 16:
        raise ValueError("grid size must be at least 16")
    h = 2.0 * np.pi / n
    x = (np.arange(n) - n // 2) * h
    x.flags.writeable = False
    return Grid(n=int(n), h=h, x=x)


def potential_values(profile: PotentialProfile, grid: Grid) -> NDArray[np.float64]:
    """Effective potential V(x_i) = k^2 / g(x_i) on the grid."""
    k2 = float(profile.k) ** 2
    if profile.family is Family.CUSP:
        return k2 * (np.abs(grid.x) + 1.0)
    return k2 * (2.0 - np.cos(grid.x))


def quadratic_well_coefficient(profile: PotentialProfile) -> float:
    """Second derivative V''(0) of the smooth-well potential.

    The harmonic approximation V(x) = k^2 + V''(0) x^2 / 2 near x = 0 is
    what the Gaussian reference state is built from; the cusp family has no
    such approximation.
    """
    if profile.family is not Family.SMOOTH:
        raise ValueError("cusp has no quadratic well")
    return float(profile.k) ** 2
