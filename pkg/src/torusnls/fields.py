"""Field states, eigenbasis transforms, and the norms used by the experiments.

A reduced field v(x) lives in the span of the lowest M eigenmodes; its two
representations are grid values and eigen-coefficients c_j = h <v, phi_j>.
The Sobolev norm is defined spectrally through the operator eigenvalues,

    ||v||_{H^s}^2 = sum_j (1 + lambda_j)^s |c_j|^2,

which for the e^{iky} sector coincides with the surface Sobolev norm because
the lambda_j are exactly the Laplace-Beltrami eigenvalues of that sector.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .eigensolver import DiscreteOperator, EigenBasis
from .potential import Grid


def check_sobolev_index(s: float) -> float:
    s = float(s)
    if not 0.0 <= s < 1.0:
        raise ValueError("s must lie in [0,1)")
    return s


@dataclass(frozen=True, eq=False)
class FieldState:
    """Solution snapshot: eigen-coefficients at a given time."""

    time: float
    coeffs: NDArray[np.complex128]


def project(basis: EigenBasis, values: NDArray) -> NDArray[np.complex128]:
    """Eigen-coefficients c_j = h <values, phi_j> of a grid function."""
    if values.shape != (basis.grid.n,):
        raise ValueError("values do not match basis grid")
    return basis.grid.h * (basis.phi.T @ values)


def synthesize(basis: EigenBasis, coeffs: NDArray) -> NDArray[np.complex128]:
    """Grid values of sum_j c_j phi_j."""
    if coeffs.shape != (basis.m,):
        raise ValueError("coefficient vector does not match basis size")
    return basis.phi @ coeffs


def mass(coeffs: NDArray) -> float:
    """L^2 mass sum |c_j|^2 of a coefficient vector."""
    return float(np.sum(np.abs(coeffs) ** 2))


class LpNorms(NamedTuple):
    l2: float
    l4: float
    l6: float
    linf: float


def lp_norms(grid: Grid, values: NDArray) -> LpNorms:
    """Quadrature-weight L^p norms (p = 2, 4, 6) and the sup norm."""
    a2 = np.abs(values) ** 2
    h = grid.h
    return LpNorms(
        l2=float(np.sqrt(h * np.sum(a2))),
        l4=float((h * np.sum(a2**2)) ** 0.25),
        l6=float((h * np.sum(a2**3)) ** (1.0 / 6.0)),
        linf=float(np.sqrt(np.max(a2))),
    )


def hs_norm(basis: EigenBasis, coeffs: NDArray, s: float) -> float:
    """Spectral Sobolev norm (sum (1+lambda_j)^s |c_j|^2)^{1/2}, s in [0,1)."""
    s = check_sobolev_index(s)
    w = (1.0 + basis.lam) ** s
    return float(np.sqrt(np.sum(w * np.abs(coeffs) ** 2)))


def energy(basis: EigenBasis, coeffs: NDArray) -> float:
    """Conserved energy sum lambda_j |c_j|^2 + (1/2)||v||_4^4."""
    v = synthesize(basis, coeffs)
    quartic = basis.grid.h * float(np.sum(np.abs(v) ** 4))
    return float(np.sum(basis.lam * np.abs(coeffs) ** 2)) + 0.5 * quartic


def energy_grid(op: DiscreteOperator, values: NDArray) -> float:
    """Energy from the grid side: h Re<v, Hv> + (1/2) h sum |v|^4.

    Independent of the eigen-decomposition; used to cross-check energy().
    """
    h = op.grid.h
    quad = h * float(np.real(np.vdot(values, op.matvec(values))))
    quartic = h * float(np.sum(np.abs(values) ** 4))
    return quad + 0.5 * quartic


def tail_mass(basis: EigenBasis, values: NDArray) -> float:
    """Mass of the component of a grid function outside the basis span."""
    h = basis.grid.h
    total = h * float(np.sum(np.abs(values) ** 2))
    return max(total - mass(project(basis, values)), 0.0)
