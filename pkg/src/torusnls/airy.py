"""Self-contained Airy / Hermite reference oracle.

Everything here is computed from scratch (Maclaurin series, standard
asymptotic expansions, bisection) so that the eigensolver can be validated
against a code path it shares nothing with.  The model operator on the line,
-d^2/dx^2 + k^2 |x|, rescales to the unit problem -d^2/dy^2 + |y| under
x = k^{-2/3} y, so its spectrum is k^{4/3} times the Airy zeros:

* even levels n:  k^{4/3} z'_{n/2+1}   (zeros of Ai'),
* odd levels n:   k^{4/3} z_{(n+1)/2}  (zeros of Ai),

and its ground state is Ai(k^{2/3}|x| - z'_1) up to normalization.  The
smooth-well analogue is the Gaussian ground state of the harmonic
approximation.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import NDArray

from .potential import Grid, PotentialProfile, quadratic_well_coefficient

# Ai(0) = 3^{-2/3}/Gamma(2/3), Ai'(0) = -3^{-1/3}/Gamma(1/3)
_C1 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
_C2 = 3.0 ** (-1.0 / 3.0) / math.gamma(1.0 / 3.0)

ARG_LIMIT = 20.0
# series region: [-_SWITCH_NEG, _SWITCH_POS]; asymptotics outside.  The
# oscillatory expansion only reaches ~1e-10 absolute accuracy once the phase
# variable (2/3)|x|^{3/2} is large enough, hence the wider series region on
# the negative side.
_SWITCH_POS = 6.0
_SWITCH_NEG = 7.0


def _series_ai_and_prime(x: float) -> tuple[float, float]:
    """Maclaurin series for Ai and Ai', summed to machine convergence.

    Ai = c1*f - c2*g with f = sum a_k x^{3k}, g = sum b_k x^{3k+1}.
    """
    x3 = x * x * x
    # f, g and their derivatives accumulated term by term
    a_term = 1.0          # a_k x^{3k}
    b_term = x            # b_k x^{3k+1}
    f = a_term
    g = b_term
    fp = 0.0              # f' = sum a_k 3k x^{3k-1}
    gp = 1.0              # g' = sum b_k (3k+1) x^{3k}
    k = 0
    while True:
        a_next = a_term * x3 / ((3 * k + 2) * (3 * k + 3))
        b_next = b_term * x3 / ((3 * k + 3) * (3 * k + 4))
        k += 1
        f += a_next
        g += b_next
        if x != 0.0:
            fp += a_next * (3 * k) / x
        gp += b_next * (3 * k + 1) / x if x != 0.0 else 0.0
        if abs(a_next) < 1e-18 * (1.0 + abs(f)) and abs(b_next) < 1e-18 * (1.0 + abs(g)):
            break
        if k > 200:
            break
        a_term = a_next
        b_term = b_next
    ai = _C1 * f - _C2 * g
    aip = _C1 * fp - _C2 * gp
    return ai, aip


@lru_cache(maxsize=1)
def _asymptotic_coeffs(count: int = 24) -> tuple[tuple[float, ...], tuple[float, ...]]:
    """u_k and v_k coefficients of the standard Airy asymptotic expansions."""
    u = [1.0]
    v = [1.0]
    for k in range(count - 1):
        nxt = u[-1] * (6 * k + 1) * (6 * k + 3) * (6 * k + 5) / (216.0 * (k + 1) * (2 * k + 1))
        u.append(nxt)
        v.append(nxt * (6 * (k + 1) + 1) / (1 - 6 * (k + 1)))
    return tuple(u), tuple(v)


def _asym_sum(coeffs, zeta: float, start: int, stride: int, sign_alternate: bool) -> float:
    """Sum coeffs[start::stride] / zeta^k with optimal truncation."""
    total = 0.0
    prev = math.inf
    k = start
    while k < len(coeffs):
        term = coeffs[k] / zeta**k
        if abs(term) > prev:
            break
        sgn = -1.0 if (sign_alternate and ((k - start) // stride) % 2 == 1) else 1.0
        total += sgn * term
        prev = abs(term)
        k += stride
    return total


def _asym_pos(x: float) -> tuple[float, float]:
    """Ai, Ai' for large positive x (exponentially decaying regime)."""
    u, v = _asymptotic_coeffs()
    zeta = (2.0 / 3.0) * x ** 1.5
    pref = math.exp(-zeta) / (2.0 * math.sqrt(math.pi))
    s_ai = _asym_sum(u, zeta, 0, 1, True)
    s_aip = _asym_sum(v, zeta, 0, 1, True)
    return pref * x ** (-0.25) * s_ai, -pref * x ** 0.25 * s_aip


def _asym_neg(x: float) -> tuple[float, float]:
    """Ai, Ai' for large negative x (oscillatory regime)."""
    u, v = _asymptotic_coeffs()
    t = -x
    zeta = (2.0 / 3.0) * t ** 1.5
    theta = zeta - 0.25 * math.pi
    ct, st = math.cos(theta), math.sin(theta)
    pref = 1.0 / math.sqrt(math.pi)
    p = _asym_sum(u, zeta, 0, 2, True)
    q = _asym_sum(u, zeta, 1, 2, True)
    r = _asym_sum(v, zeta, 0, 2, True)
    s = _asym_sum(v, zeta, 1, 2, True)
    ai = pref * t ** (-0.25) * (ct * p + st * q)
    aip = pref * t ** 0.25 * (st * r - ct * s)
    return ai, aip


def _airy_both(x: float) -> tuple[float, float]:
    if not -ARG_LIMIT <= x <= ARG_LIMIT:
        raise ValueError(f"Airy argument {x} outside supported range |x| <= {ARG_LIMIT}")
    if -_SWITCH_NEG <= x <= _SWITCH_POS:
        return _series_ai_and_prime(x)
    if x > 0:
        return _asym_pos(x)
    return _asym_neg(x)


def airy_ai(x: float) -> float:
    """Ai(x) for |x| <= 20, absolute error below 1e-10."""
    return _airy_both(float(x))[0]


def airy_ai_prime(x: float) -> float:
    """Ai'(x) for |x| <= 20, absolute error below 1e-10."""
    return _airy_both(float(x))[1]


def airy_ai_array(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Elementwise Ai over an array (convenience wrapper)."""
    flat = np.asarray(x, dtype=float).ravel()
    out = np.fromiter((airy_ai(v) for v in flat), dtype=float, count=flat.size)
    return out.reshape(np.shape(x))


class BracketError(RuntimeError):
    """A zero bracket failed to show a sign change (evaluator defect)."""


def _bisect(func, lo: float, hi: float, tol: float = 1e-12) -> float:
    flo = func(lo)
    fhi = func(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise BracketError(f"no sign change on [{lo}, {hi}] (f: {flo:.3e}, {fhi:.3e})")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = func(mid)
        if fmid == 0.0:
            return mid
        if flo * fmid < 0.0:
            hi = mid
        else:
            lo, flo = mid, fmid
    return 0.5 * (lo + hi)


def _bracketed_zero(func, estimate: float, label: str) -> float:
    width = 0.25
    for _ in range(4):
        lo = max(estimate - width, 1e-3)
        hi = estimate + width
        try:
            return _bisect(func, lo, hi)
        except BracketError:
            width *= 2.0
    raise BracketError(f"could not bracket {label} near {estimate}")


def airy_zero(m: int) -> float:
    """m-th positive zero z_m of Ai(-z), m = 1..10, to 1e-8."""
    if not 1 <= m <= 10:
        raise ValueError("zero index must be in 1..10")
    t = 3.0 * math.pi * (4 * m - 1) / 8.0
    estimate = t ** (2.0 / 3.0) * (1.0 + 5.0 / 48.0 / t**2)
    return _bracketed_zero(lambda z: airy_ai(-z), estimate, f"airy zero {m}")


def airy_prime_zero(m: int) -> float:
    """m-th positive zero z'_m of Ai'(-z), m = 1..10, to 1e-8."""
    if not 1 <= m <= 10:
        raise ValueError("zero index must be in 1..10")
    t = 3.0 * math.pi * (4 * m - 3) / 8.0
    estimate = t ** (2.0 / 3.0) * (1.0 - 7.0 / 48.0 / t**2)
    return _bracketed_zero(lambda z: airy_ai_prime(-z), estimate, f"airy-prime zero {m}")


@dataclass(frozen=True)
class AiryZeroTable:
    """Ascending zeros of Ai and Ai' on the negative axis (as positive z)."""

    ai_zeros: tuple[float, ...]
    aip_zeros: tuple[float, ...]

    def __post_init__(self):
        za, zp = self.ai_zeros, self.aip_zeros
        for m in range(len(za)):
            if not zp[m] < za[m]:
                raise ValueError("zero interlacing violated")
            if m + 1 < len(zp) and not za[m] < zp[m + 1]:
                raise ValueError("zero interlacing violated")
        for z in za:
            if abs(airy_ai(-z)) > 1e-10:
                raise ValueError(f"stored Ai zero {z} has residual > 1e-10")
        for z in zp:
            if abs(airy_ai_prime(-z)) > 1e-10:
                raise ValueError(f"stored Ai' zero {z} has residual > 1e-10")


@lru_cache(maxsize=4)
def zero_table(count: int = 10) -> AiryZeroTable:
    return AiryZeroTable(
        ai_zeros=tuple(airy_zero(m) for m in range(1, count + 1)),
        aip_zeros=tuple(airy_prime_zero(m) for m in range(1, count + 1)),
    )


def unit_level(n: int) -> float:
    """n-th eigenvalue of the unit model problem -d^2/dy^2 + |y| on the line.

    Even eigenfunctions pair with zeros of Ai' (Neumann condition at 0),
    odd ones with zeros of Ai (Dirichlet at 0).
    """
    table = zero_table()
    if n % 2 == 0:
        return table.aip_zeros[n // 2]
    return table.ai_zeros[(n + 1) // 2 - 1]


@dataclass(frozen=True)
class ModelSpectrum:
    """Lowest eigenvalues alpha_n = k^{4/3} zeta_n of -d^2/dx^2 + k^2 |x|."""

    k: int
    alpha: tuple[float, ...]

    def __post_init__(self):
        if any(b <= a for a, b in zip(self.alpha, self.alpha[1:])):
            raise ValueError("model spectrum must be strictly increasing")


def model_spectrum(k: int, count: int) -> ModelSpectrum:
    if not 1 <= count <= 10:
        raise ValueError("count must be in 1..10")
    if k < 1:
        raise ValueError("k must be a positive integer")
    scale = float(k) ** (4.0 / 3.0)
    return ModelSpectrum(k=k, alpha=tuple(scale * unit_level(n) for n in range(count)))


def model_ground_state(k: int, grid: Grid) -> NDArray[np.float64]:
    """Scaled Airy ground state of the model operator, sampled on the grid.

    psi(x) = C * Ai(k^{2/3}|x| - z'_1), normalized so h * sum psi^2 = 1 and
    psi(0) > 0.  Requires the grid to resolve the k^{-2/3} concentration
    scale with at least 8 points.
    """
    scale = float(k) ** (2.0 / 3.0)
    if grid.h > 1.0 / (8.0 * scale):
        raise ValueError(
            f"grid too coarse for the Airy scale at k={k}: h={grid.h:.3e} > {1.0/(8*scale):.3e}"
        )
    zp1 = zero_table().aip_zeros[0]
    arg = scale * np.abs(grid.x) - zp1
    psi = np.zeros(grid.n)
    inside = arg <= ARG_LIMIT
    psi[inside] = [airy_ai(v) for v in arg[inside]]
    norm = math.sqrt(grid.h * float(np.dot(psi, psi)))
    psi /= norm
    return psi


def hermite_ground_state(profile: PotentialProfile, grid: Grid) -> tuple[NDArray[np.float64], float]:
    """Gaussian ground state of the harmonic approximation of the smooth well.

    With V(x) = k^2 + V''(0) x^2/2 near 0, the ground state of
    -d^2/dx^2 + beta^2 x^2 is exp(-beta x^2 / 2) with energy beta, where
    beta = sqrt(V''(0)/2).  Returns the grid-normalized Gaussian and the
    predicted ground eigenvalue k^2 + beta.
    """
    vpp = quadratic_well_coefficient(profile)
    beta = math.sqrt(vpp / 2.0)
    if grid.h > 1.0 / (8.0 * math.sqrt(float(profile.k))):
        raise ValueError(
            f"grid too coarse for the Gaussian scale at k={profile.k}: h={grid.h:.3e}"
        )
    psi = np.exp(-0.5 * beta * grid.x**2)
    psi /= math.sqrt(grid.h * float(np.dot(psi, psi)))
    return psi, float(profile.k) ** 2 + beta
