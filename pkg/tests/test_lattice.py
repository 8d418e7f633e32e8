import cmath
import math

import numpy as np
import pytest

from weierdim.errors import InvalidArgumentError, InvalidLatticeError
from weierdim.lattice import (
    RHO,
    Lattice,
    equianharmonic_lattice,
    g3_unit,
    invariants,
    make_pole_critical_lattice,
    nearest_lattice_point,
    points_in_box,
    poles_in_half_annulus,
    reduce_to_fundamental,
    select_poles,
    triangular_lattice,
)
from weierdim.weierstrass import EllipticEvaluator


def test_degenerate_lattice_rejected():
    with pytest.raises(InvalidLatticeError):
        Lattice(1, 2)
    with pytest.raises(InvalidLatticeError):
        Lattice(0, 1j)


def test_orientation_and_points():
    lat = Lattice(1, 1j)
    assert lat.orientation == 1
    assert Lattice(1, -1j).orientation == -1
    assert lat.point(2, -3) == 2 - 3j
    assert lat.area == pytest.approx(1.0)


def test_json_round_trip(gamma3):
    again = Lattice.from_json(gamma3.to_json())
    assert again == gamma3


def test_truncation_radius_minimum():
    with pytest.raises(InvalidArgumentError):
        invariants(triangular_lattice(), truncation_radius=5)


def test_triangular_g2_vanishes_within_tail_bound():
    inv = invariants(triangular_lattice())
    assert abs(inv.g2) <= inv.tail_bound_g2


def test_triangular_g3_agrees_across_radii():
    lo = invariants(triangular_lattice(), 200)
    hi = invariants(triangular_lattice(), 400)
    assert abs(lo.g3 - hi.g3) <= lo.tail_bound + hi.tail_bound
    assert abs(hi.g3 - g3_unit()) <= hi.tail_bound + 1e-9 * g3_unit()


def test_square_lattice_g3_vanishes():
    inv = invariants(Lattice(1, 1j))
    assert abs(inv.g3) <= inv.tail_bound


def test_tail_bound_decreases():
    bounds = [invariants(triangular_lattice(), n).tail_bound for n in (20, 40, 80)]
    assert bounds[0] > bounds[1] > bounds[2]


@pytest.mark.parametrize("alpha", [2, 1 + 1j, 0.5])
def test_invariant_scaling_law(alpha):
    base = invariants(Lattice(1, 0.3 + 1.1j), 100)
    scaled = invariants(Lattice(alpha, alpha * (0.3 + 1.1j)), 100)
    tol2 = base.tail_bound_g2 * abs(alpha) ** -4 + scaled.tail_bound_g2
    tol3 = base.tail_bound * abs(alpha) ** -6 + scaled.tail_bound
    assert abs(scaled.g2 - alpha**-4 * base.g2) <= tol2
    assert abs(scaled.g3 - alpha**-6 * base.g3) <= tol3


def test_equianharmonic_lattice_has_invariants_0_4():
    omega = equianharmonic_lattice(4)
    ev = EllipticEvaluator(omega)
    assert abs(ev.g2) < 1e-8
    assert abs(ev.g3 - 4) < 4e-8


def test_equianharmonic_identity_scaling():
    lat = equianharmonic_lattice(g3_unit())
    assert lat.lambda1 == 1
    assert lat.lambda2 == triangular_lattice().lambda2


def test_equianharmonic_scaling_by_two():
    a = equianharmonic_lattice(4)
    b = equianharmonic_lattice(4 * 2**6)
    assert abs(b.lambda1 - a.lambda1 / 2) < 1e-14


@pytest.mark.parametrize("m", [-1, -3, -5, -7])
def test_pole_critical_lattice(m):
    lat = make_pole_critical_lattice(m)
    assert lat.is_triangular()
    ev = EllipticEvaluator(lat)
    gamma1 = lat.lambda1
    assert abs(ev.eval(gamma1 / 2)[0] - m * gamma1) < 1e-8 * abs(gamma1)


def test_pole_critical_value_is_lattice_point(gamma3):
    l, m, b = nearest_lattice_point(gamma3, -3 * gamma3.lambda1)
    assert (l, m) == (-3, 0)


def test_cube_root_is_principal(gamma3):
    # gamma1^3 has argument pi, so the principal root sits at pi/3
    assert cmath.phase(gamma3.lambda1) == pytest.approx(math.pi / 3)


@pytest.mark.parametrize("m", [-2, 0, 3])
def test_pole_critical_rejects_bad_m(m):
    with pytest.raises(InvalidArgumentError):
        make_pole_critical_lattice(m)


def test_reduce_examples(gamma3):
    l1, l2 = gamma3.lambda1, gamma3.lambda2
    z_red, l, m = reduce_to_fundamental(l1 + l2, gamma3)
    assert (l, m) == (1, 1) and abs(z_red) < 1e-12
    z_red, l, m = reduce_to_fundamental(0.5 * l1, gamma3)
    assert (l, m) == (0, 0) and abs(z_red - 0.5 * l1) < 1e-15


def test_reduce_round_trip(gamma3):
    rng = np.random.default_rng(1)
    zs = rng.normal(scale=50, size=10_000) + 1j * rng.normal(scale=50, size=10_000)
    for z in zs:
        z_red, l, m = reduce_to_fundamental(complex(z), gamma3)
        assert abs(z - (z_red + gamma3.point(l, m))) < 1e-12 * max(1, abs(z))


def test_triangular_point_set_rotation_invariant():
    lat = triangular_lattice(1.3 + 0.2j)
    r = 20 * abs(lat.lambda1)
    pts = [p.value for p in points_in_box(lat, -r, r, -r, r) if abs(p.value) <= r]
    for b in pts:
        _, _, nb = nearest_lattice_point(lat, RHO * b)
        assert abs(nb - RHO * b) < 1e-9 * abs(lat.lambda1)


def test_half_annulus_counts_scale_with_area(gamma3):
    R = 50 * abs(gamma3.lambda1)
    n1 = len(poles_in_half_annulus(gamma3, R, 0.3, 0.1))
    n2 = len(poles_in_half_annulus(gamma3, 2 * R, 0.3, 0.1))
    assert 3.2 <= n2 / n1 <= 4.8


def test_half_annulus_small_radius_empty(gamma3):
    assert poles_in_half_annulus(gamma3, abs(gamma3.lambda1) / 2.01, 0.0, 0.1) == []


def test_half_annulus_containment_and_order(gamma3):
    R, phi, eps = 20.0, -0.7, 0.2
    pts = poles_in_half_annulus(gamma3, R, phi, eps)
    assert pts
    for b in pts:
        assert R + eps <= abs(b) <= 2 * R - eps
        assert (b * cmath.exp(-1j * phi)).imag >= eps
    keys = [(round(abs(b) / abs(gamma3.lambda1), 9), round(cmath.phase(b), 12)) for b in pts]
    assert keys == sorted(keys)


def test_half_annulus_rejects_bad_eps(gamma3):
    with pytest.raises(InvalidArgumentError):
        poles_in_half_annulus(gamma3, 10, 0, abs(gamma3.lambda1))


def test_select_poles_matches_exhaustive_prefix_region(gamma3):
    R, phi, eps = 30.0, -math.pi / 2, 1 / 16
    chosen = select_poles(gamma3, R, phi, eps, 5)
    full = set(poles_in_half_annulus(gamma3, R, phi, eps))
    assert len(chosen) == 5
    assert all(p.value in full for p in chosen)


def test_select_poles_far_out(gamma3):
    R = 1e8
    chosen = select_poles(gamma3, R, -math.pi / 2, 1 / 16, 3)
    for p in chosen:
        assert R < abs(p.value) < 2 * R
        assert abs(p.value - gamma3.point(p.l, p.m)) < 1e-6 * R
