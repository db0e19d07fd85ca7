import math

import numpy as np
import pytest
from scipy import special

from torusnls.airy import (
    airy_ai,
    airy_ai_prime,
    airy_prime_zero,
    airy_zero,
    hermite_ground_state,
    model_ground_state,
    model_spectrum,
    unit_level,
    zero_table,
    _SWITCH_NEG,
    _SWITCH_POS,
    _asym_neg,
    _asym_pos,
    _series_ai_and_prime,
)
from torusnls.potential import Family, PotentialProfile, build_grid
from torusnls.eigensolver import required_points


def test_ai_at_zero_closed_form():
    # independent closed forms via the Gamma function
    expected = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
    assert airy_ai(0.0) == pytest.approx(expected, abs=1e-14)
    expected_prime = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)
    assert airy_ai_prime(0.0) == pytest.approx(expected_prime, abs=1e-14)


def test_positive_axis_decay():
    xs = np.linspace(0.0, 20.0, 401)
    vals = [airy_ai(x) for x in xs]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert airy_ai(10.0) < 1e-9


def test_against_scipy_abs_1e10():
    xs = np.linspace(-20.0, 20.0, 2001)
    for x in xs:
        ai, aip, _, _ = special.airy(x)
        assert abs(airy_ai(x) - ai) <= 1e-10
        assert abs(airy_ai_prime(x) - aip) <= 1e-10


def test_switchover_agreement():
    s_pos = _series_ai_and_prime(_SWITCH_POS)
    a_pos = _asym_pos(_SWITCH_POS)
    s_neg = _series_ai_and_prime(-_SWITCH_NEG)
    a_neg = _asym_neg(-_SWITCH_NEG)
    for s, a in ((s_pos, a_pos), (s_neg, a_neg)):
        assert abs(s[0] - a[0]) <= 1e-8
        assert abs(s[1] - a[1]) <= 1e-8


def test_out_of_range_rejected():
    for bad in (20.5, -25.0):
        with pytest.raises(ValueError):
            airy_ai(bad)


def test_derivative_consistency():
    # centered difference of airy_ai against airy_ai_prime on [-10, 5]
    hs = 1e-5
    for x in np.linspace(-10, 5, 151):
        num = (airy_ai(x + hs) - airy_ai(x - hs)) / (2 * hs)
        assert abs(num - airy_ai_prime(x)) <= 1e-6


def test_zeros_against_scipy():
    za, zpa, _, _ = special.ai_zeros(10)
    for m in range(1, 11):
        assert airy_zero(m) == pytest.approx(-za[m - 1], abs=1e-8)
        assert airy_prime_zero(m) == pytest.approx(-zpa[m - 1], abs=1e-8)


def test_zero_interlacing():
    table = zero_table(10)
    for m in range(5):
        assert table.aip_zeros[m] < table.ai_zeros[m]
        if m + 1 < 5:
            assert table.ai_zeros[m] < table.aip_zeros[m + 1]


def test_zero_index_bounds():
    with pytest.raises(ValueError):
        airy_zero(11)
    with pytest.raises(ValueError):
        airy_prime_zero(0)


def test_model_spectrum_k1():
    ms = model_spectrum(1, 4)
    assert ms.alpha[0] == pytest.approx(1.01879297, abs=1e-7)
    assert ms.alpha[1] == pytest.approx(2.33810741, abs=1e-7)
    assert all(b > a for a, b in zip(ms.alpha, ms.alpha[1:]))


def test_model_spectrum_scaling():
    # alpha_n(k) / k^{4/3} is k-independent
    base = model_spectrum(1, 6).alpha
    for k in (7, 100, 513):
        ms = model_spectrum(k, 6)
        for n in range(6):
            assert ms.alpha[n] / k ** (4.0 / 3.0) == pytest.approx(base[n], abs=1e-10)
    gap = model_spectrum(100, 2)
    assert (gap.alpha[1] - gap.alpha[0]) / 100 ** (4.0 / 3.0) == pytest.approx(
        1.31931444, abs=1e-7
    )


def test_model_ground_state_even_and_normalized():
    k = 64
    g = build_grid(required_points(PotentialProfile(Family.CUSP, k)))
    psi = model_ground_state(k, g)
    n = g.n
    assert np.array_equal(psi, psi[(n - np.arange(n)) % n])
    assert g.h * np.dot(psi, psi) == pytest.approx(1.0, abs=1e-8)
    assert psi[n // 2] > 0


def test_model_ground_state_requires_resolution():
    with pytest.raises(ValueError, match="too coarse"):
        model_ground_state(512, build_grid(64))


def test_sup_ratio_follows_cube_root_law():
    ratios = {}
    for k in (64, 512):
        g = build_grid(required_points(PotentialProfile(Family.CUSP, k)))
        psi = model_ground_state(k, g)
        ratios[k] = np.max(np.abs(psi)) / k ** (1.0 / 3.0)
    assert abs(ratios[64] / ratios[512] - 1.0) < 0.01


def test_l4_constant_k_independent():
    consts = []
    for k in (64, 128, 256, 512):
        g = build_grid(required_points(PotentialProfile(Family.CUSP, k)))
        psi = model_ground_state(k, g)
        consts.append(g.h * np.sum(psi**4) / k ** (2.0 / 3.0))
    assert max(consts) / min(consts) - 1.0 < 0.01


def test_decay_envelope():
    # upper envelope k^{1/6} |x|^{-1/4} exp(-k |x|^{3/2} / 2) outside the
    # core; the rate constant is relaxed (the true Airy rate is 2/3), the
    # |x|^{-1/4} prefactor is required: without it the envelope is already
    # violated at |x| = k^{-2/3} by the exact profile
    k = 128
    g = build_grid(required_points(PotentialProfile(Family.CUSP, k)))
    psi = model_ground_state(k, g)
    x = np.abs(g.x)
    mask = (x > k ** (-2.0 / 3.0)) & (x < 1.0)
    envelope = (k ** (1.0 / 6.0) * x[mask] ** (-0.25)
                * np.exp(-0.5 * k * x[mask] ** 1.5))
    assert np.all(np.abs(psi[mask]) <= envelope)


def test_hermite_ground_state_closed_forms():
    k = 64
    prof = PotentialProfile(Family.SMOOTH, k)
    g = build_grid(required_points(prof))
    psi, lam_pred = hermite_ground_state(prof, g)
    b = k / math.sqrt(2.0)
    assert lam_pred == pytest.approx(k * k + b, rel=1e-14)
    assert g.h * np.dot(psi, psi) == pytest.approx(1.0, abs=1e-12)
    # sup ratio (b/pi)^{1/4} and quartic norm (b/2pi)^{1/2} from Gaussian integrals
    assert np.max(psi) == pytest.approx((b / math.pi) ** 0.25, rel=1e-10)
    assert g.h * np.sum(psi**4) == pytest.approx(math.sqrt(b / (2 * math.pi)), rel=1e-10)


def test_hermite_rejects_cusp():
    with pytest.raises(ValueError, match="quadratic well"):
        hermite_ground_state(PotentialProfile(Family.CUSP, 10), build_grid(1024))


def test_unit_level_parity_rule():
    table = zero_table(10)
    assert unit_level(0) == table.aip_zeros[0]
    assert unit_level(1) == table.ai_zeros[0]
    assert unit_level(2) == table.aip_zeros[1]
    assert unit_level(3) == table.ai_zeros[1]
