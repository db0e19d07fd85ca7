import numpy as np
import pytest

from torusnls.potential import (
    Family,
    Grid,
    PotentialProfile,
    build_grid,
    potential_values,
    quadratic_well_coefficient,
)


def test_grid_arithmetic_n16():
    g = build_grid(16)
    assert g.h == pytest.approx(np.pi / 8, abs=0)
    assert g.x[0] == pytest.approx(-np.pi, rel=1e-15)
    assert g.x[8] == 0.0
    assert g.n == 16


def test_grid_spacing_n4096():
    g = build_grid(4096)
    assert g.h == pytest.approx(2 * np.pi / 4096, abs=0)
    assert len(g.x) == 4096


def test_grid_rejects_odd():
    with pytest.raises(ValueError, match="must be even"):
        build_grid(15)


def test_grid_rejects_small():
    with pytest.raises(ValueError, match="at least 16"):
        build_grid(14)


def test_grid_rejects_non_integer():
    with pytest.raises(ValueError):
        build_grid(16.5)


def test_grid_exactly_symmetric():
    g = build_grid(64)
    # x_{n/2+j} = -x_{n/2-j} bit for bit
    for j in range(1, 32):
        assert g.x[32 + j] == -g.x[32 - j]


def test_profile_rejects_bad_k():
    for bad in (0, -3, 1.5, True):
        with pytest.raises(ValueError):
            PotentialProfile(Family.CUSP, bad)


def test_cusp_values():
    prof = PotentialProfile(Family.CUSP, 10)
    g = build_grid(64)
    v = potential_values(prof, g)
    assert v[32] == 100.0                      # x = 0 exactly
    assert v[0] == pytest.approx(100.0 * (np.pi + 1.0), rel=1e-14)
    assert np.all(v >= 100.0)


def test_smooth_values():
    prof = PotentialProfile(Family.SMOOTH, 10)
    g = build_grid(64)
    v = potential_values(prof, g)
    assert v[32] == pytest.approx(100.0, abs=0)
    assert v[0] == pytest.approx(300.0, rel=1e-14)


@pytest.mark.parametrize("family", [Family.CUSP, Family.SMOOTH])
def test_even_and_minimum_at_zero(family):
    prof = PotentialProfile(family, 7)
    g = build_grid(128)
    v = potential_values(prof, g)
    n = g.n
    sym = v[(n - np.arange(n)) % n]
    assert np.array_equal(v, sym)
    assert np.argmin(v) == n // 2
    assert v[n // 2] == pytest.approx(49.0, abs=0)
    # strictly monotone in |x| on [0, pi]
    right = v[n // 2:]
    assert np.all(np.diff(right) > 0)


def test_quadratic_well_coefficient():
    assert quadratic_well_coefficient(PotentialProfile(Family.SMOOTH, 10)) == 100.0
    assert quadratic_well_coefficient(PotentialProfile(Family.SMOOTH, 64)) == 4096.0
    with pytest.raises(ValueError, match="cusp has no quadratic well"):
        quadratic_well_coefficient(PotentialProfile(Family.CUSP, 10))


def test_ground_state_scale():
    assert PotentialProfile(Family.CUSP, 64).ground_state_scale() == pytest.approx(64 ** (-2 / 3))
    assert PotentialProfile(Family.SMOOTH, 64).ground_state_scale() == pytest.approx(0.125)
