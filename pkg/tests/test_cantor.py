import cmath
import json
import math

import numpy as np
import pytest
from gmpy2 import mpc

from weierdim import geometry
from weierdim.cantor import (
    ALPHA,
    HALF_ANGLE,
    R_LIMIT,
    STATS_HEADER,
    Segment,
    _a0_terms,
    _hn_fdf,
    build_family,
    choose_constants,
    family_stats,
    monte_carlo_area,
    required_dps,
    segment_is_injective,
    segment_offsets,
    solve_prepole_param,
    stats_csv,
    thread_count,
    verify_cover,
    with_growth,
)
from weierdim.dynamics import h_n, orbit
from weierdim.errors import ConstructionInfeasibleError, InvalidArgumentError, InvalidConstantsError
from weierdim.lattice import count_poles_in_half_annulus
from weierdim.roots import damped_newton
from weierdim.weierstrass import critical_points, estimate_pole_constants


# ---------------------------------------------------------------- segments
def test_segment_area_and_membership():
    s = Segment(2 + 1j, 0.1)
    assert s.area == pytest.approx(3 * math.pi / 8 * 0.01)
    assert s.contains(2 + 1j)
    assert s.contains(2.09 + 1j)
    assert not s.contains(2.11 + 1j)
    assert not s.contains(1.95 + 1j)  # behind the apex
    assert s.contains(2 + 1j + 0.05 * cmath.exp(1j * (HALF_ANGLE - 1e-3)))
    assert not s.contains(2 + 1j + 0.05 * cmath.exp(1j * (HALF_ANGLE + 1e-3)))


def test_segment_offsets_order_and_orientation():
    offs = segment_offsets(0.25, 64)
    assert len(offs) == 64 and offs[0] == 0
    assert geometry.shoelace_area(offs) > 0
    assert geometry.is_simple(offs)
    assert geometry.shoelace_area(segment_offsets(0.25, 4096)) == pytest.approx(Segment(0, 0.25).area, rel=1e-5)
    seg = Segment(0j, 0.25)
    assert all(seg.distance_to_boundary(o) < 1e-12 for o in offs)


def test_segment_distance_to_boundary():
    seg = Segment(0j, 1.0)
    assert seg.distance_to_boundary(0.5) == pytest.approx(min(0.5, 0.5 * math.sin(HALF_ANGLE)))
    assert seg.distance_to_boundary(-1.0) == pytest.approx(1.0)


def test_segment_injectivity_sampling(ev):
    assert segment_is_injective(ev, 1 / 16)


# --------------------------------------------------------------- constants
def test_trivial_a0_is_two():
    terms = _a0_terms(1.0, 10.0, 10.0, 0.01, 0.01, 1.0)
    assert terms[0] == 2 and max(terms) == 2


def test_constants_invariants(consts):
    assert consts.a0 == max(consts.a0_terms)
    assert consts.a0 >= 2
    assert consts.a == 2 * consts.a0
    assert consts.R2 == pytest.approx(consts.a * consts.R1)
    assert consts.R2 > consts.C1 / ((1 - ALPHA) * consts.eps**2)
    assert consts.eps < consts.eps0
    assert consts.eps <= consts.r * abs(consts.e1)
    assert math.log2(consts.eps) == int(math.log2(consts.eps))
    seg = Segment(consts.e1, consts.eps)
    offs = np.asarray(seg.boundary_offsets(4096)) + consts.e1
    assert np.all(np.abs(offs) > consts.R1) and np.all(np.abs(offs) < 2 * consts.R1)


def test_requested_growth(ev, pole_data, consts):
    big = choose_constants(ev, pole_data, a=1e6)
    assert big.a == 1e6 and big.a_requested == 1e6
    small = choose_constants(ev, pole_data, a=3.0)
    assert small.a == consts.a


def test_r_limit_enforced(ev):
    assert R_LIMIT == pytest.approx(0.25 - 1 / (2 * math.sin(math.pi / 8) + 4))
    pd = estimate_pole_constants(ev, 0.2 * ev.lattice.min_generator, 0.05)
    with pytest.raises(ConstructionInfeasibleError):
        choose_constants(ev, pd)


def test_eps_override_checked(ev, pole_data):
    with pytest.raises(ConstructionInfeasibleError):
        choose_constants(ev, pole_data, eps=0.5)
    c = choose_constants(ev, pole_data, eps=1 / 32)
    assert c.eps == 1 / 32


def test_with_growth_requires_a_above_a0(consts):
    with pytest.raises(InvalidConstantsError):
        with_growth(consts, consts.a0 / 2)
    c = with_growth(consts, 1e12)
    assert c.R2 == pytest.approx(1e12 * c.R1)


def test_cover_verified(ev, consts):
    ok, failures = verify_cover(ev, consts, n_samples=1000)
    assert ok and failures == 0


def test_required_dps_grows_with_depth(consts):
    assert required_dps(consts, 5) > required_dps(consts, 4) > required_dps(consts, 3)
    assert required_dps(consts, 4) > -consts.log10_d_bound(4)


def test_derivative_bounds_ordered(consts):
    for n in range(2, 6):
        lo, hi = consts.derivative_bounds(n)
        assert 0 < lo < hi


# --------------------------------------------------------------- root finding
def test_level_one_solve_matches_closed_form(ev, consts, tree3):
    hp = ev.with_dps(40)
    from weierdim.lattice import select_poles

    with hp.precision():
        e1 = hp.eval_mp(critical_points(hp, mp=True)[0])[0]
        for p in select_poles(hp.lattice, consts.R(2), consts.phi, consts.eps, 3):
            beta = solve_prepole_param(hp, consts, None, p, 1)
            l2 = hp.mp_l2 if hp.lattice.orientation > 0 else -hp.mp_l2
            exact = (p.l * hp.mp_l1 + p.m * l2) / e1
            assert abs(beta - exact) < 1e-10 * abs(exact)


def test_newton_from_exact_root_is_stationary(ev, consts, tree3):
    cyl = tree3.level(3)[0]
    hp = ev.with_dps(tree3.dps)
    with hp.precision():
        f_df = _hn_fdf(hp, 3, cyl.target_pole)
        tol = 1e-9 * float(abs(cyl.target_pole))
        res = damped_newton(f_df, cyl.boundary_root, tol)
        assert res.converged and res.iterations <= 1
        assert abs(res.root - cyl.boundary_root) < cyl.scale * 1e-12


def test_level_three_root_is_a_prepole(ev, consts, tree3):
    cyl = tree3.level(3)[0]
    hp = ev.with_dps(tree3.dps)
    with hp.precision():
        beta = cyl.boundary_root
        v = h_n(hp, beta, 3)
        assert abs(v.value - cyl.target_pole) < 1e-9 * abs(cyl.target_pole)
        tr = orbit(hp, beta, critical_points(hp, mp=True)[0], 4)
        assert tr.status.kind == "prepole" and tr.status.n == 3
        assert abs(tr.status.pole - cyl.target_pole) < 1e-6
        # a tiny displacement inside the cylinder sends the next iterate far out
        near = beta + mpc(1e-6) * cyl.scale
        assert abs(h_n(hp, near, 4).value) > 1e8


def test_solve_needs_parent_or_seed(ev, consts):
    hp = ev.with_dps(40)
    with pytest.raises(InvalidArgumentError):
        solve_prepole_param(hp, consts, None, 100 + 0j, 2)


# ------------------------------------------------------------------ families
def test_level_one_inside_parameter_disk(tree3, consts):
    top = tree3.cylinders["1"]
    pts = np.array([complex(p) for p in top.boundary_samples])
    assert np.all(np.abs(pts - 1) <= consts.r)


def test_nesting_and_residuals(tree3, consts):
    for c in tree3.cylinders.values():
        assert c.injective
        assert c.residual_max < 1e-8
        if c.parent is not None:
            p = tree3.cylinders[c.parent]
            inside, total = geometry.contains_all(p.local(), p.local(c.boundary_samples, p.boundary_root, p.scale))
            assert inside == total


def test_boundary_maps_onto_segment_boundary(ev, tree3, consts):
    hp = ev.with_dps(tree3.dps)
    cyl = tree3.level(3)[1]
    seg = Segment(0j, consts.eps)
    with hp.precision():
        worst = max(seg.distance_to_boundary(complex(h_n(hp, p, 3, derivative=False).value - cyl.target_pole)) for p in cyl.boundary_samples)
    assert worst < 1e-8 * consts.eps


def test_siblings_disjoint(tree3):
    for p in list(tree3.cylinders.values()):
        kids = tree3.children(p.id)
        for i in range(len(kids)):
            for j in range(i + 1, len(kids)):
                a = p.local(kids[i].boundary_samples, p.boundary_root, p.scale)
                b = p.local(kids[j].boundary_samples, p.boundary_root, p.scale)
                assert geometry.disjoint(a, b)


def test_diameter_sandwich(tree3, consts):
    for c in tree3.cylinders.values():
        if c.level < 2:
            continue
        lower = 2 * consts.eps * (1 - math.cos(HALF_ANGLE)) / consts.derivative_bounds(c.level)[1]
        assert lower <= c.diam_measured <= consts.d_bound(c.level)


def test_distortion_within_bound(tree3, consts):
    for c in tree3.cylinders.values():
        assert 1 <= c.distortion_measured <= consts.distortion_bound(c.level)


def test_monte_carlo_area_agrees(ev, tree3, consts):
    cyl = tree3.level(2)[0]
    hp = ev.with_dps(tree3.dps)
    mc = monte_carlo_area(hp, consts, cyl, n_points=10_000, seed=1)
    assert abs(mc - cyl.area_measured) < 0.05 * cyl.area_measured


def test_diameters_decrease(tree4):
    d = [s.d_n_measured for s in family_stats(tree4)]
    assert all(x > y for x, y in zip(d, d[1:]))


def test_pole_count_ratio(gamma3, consts):
    for n in (3, 4):
        ratio = count_poles_in_half_annulus(gamma3, consts.R(n + 1), consts.phi, consts.eps) / count_poles_in_half_annulus(
            gamma3, consts.R(n), consts.phi, consts.eps
        )
        assert abs(ratio / consts.a**2 - 1) < 0.3


def test_stats_csv_header(tree3):
    text = stats_csv(family_stats(tree3))
    lines = text.splitlines()
    assert lines[0] == STATS_HEADER
    assert len(lines) == 1 + tree3.depth


def test_tree_json_shape_and_ids(tree3):
    data = json.loads(tree3.dumps())
    ids = [c["id"] for c in data["cylinders"]]
    assert ids == ["1", "1.0", "1.1", "1.0.0", "1.0.1", "1.1.0", "1.1.1"]
    required = {"level", "pole", "root", "boundary", "diam", "area", "parent_id"}
    for c in data["cylinders"]:
        assert required <= set(c)
        assert len(c["boundary"]) >= 64


def test_tree_rebuild_identical(ev, consts, tree3):
    again = build_family(ev, consts, depth=3, branching=2, threads=1, full_density=False)
    assert again.dumps() == tree3.dumps()


def test_build_rejects_bad_arguments(ev, consts):
    with pytest.raises(InvalidArgumentError):
        build_family(ev, consts, 0, 2)
    with pytest.raises(InvalidArgumentError):
        build_family(ev, consts, 2, 0)


def test_thread_count_cap(monkeypatch):
    monkeypatch.setenv("WEIER_THREADS", "2")
    assert thread_count(8) == 2
    assert thread_count(1) == 1
    monkeypatch.delenv("WEIER_THREADS")
    assert thread_count(3) == 3


# ------------------------------------------------------------------ escaping
def test_cauchy_property(chain5, consts):
    chain, _ = chain5
    b5, b4 = chain[-1].interior_sample, chain[-2].interior_sample
    assert float(abs(b5 - b4)) <= consts.d_bound(4)


def test_first_iterate_sits_inside_the_first_annulus(ev, chain5, consts):
    # z1 lies in U(wp(c1), eps), which is inside P(R1, 2R1); |z1| > 2 R1 cannot hold
    chain, _ = chain5
    beta = complex(chain[-1].interior_sample)
    z1 = orbit(ev, beta, critical_points(ev)[0], 1).points[1]
    assert consts.R1 < abs(z1) < 2 * consts.R1
