import math

import numpy as np
import pytest

from weierdim.cantor import with_growth
from weierdim.dimension import (
    NestedFamilySpec,
    analytic_bound,
    box_count_dimension,
    cantor_dust_spec,
    cantor_points,
    consistency_check,
    mcmullen_bound,
    mcmullen_partials,
    cylinder_family_spec,
    ternary_cantor_spec,
)
from weierdim.errors import InvalidArgumentError, InvalidConstantsError, InvalidSpecError


def test_ternary_partials_exact():
    target = math.log(2) / math.log(3)
    for _, v in mcmullen_partials(ternary_cantor_spec(), 40):
        assert v == pytest.approx(target, abs=1e-14)
    assert abs(mcmullen_bound(ternary_cantor_spec(), 40).extrapolated - target) < 1e-6


def test_dust_limit():
    b = mcmullen_bound(cantor_dust_spec(), 2000)
    assert abs(b.extrapolated - math.log(4) / math.log(3)) < 1e-4
    assert b.extrapolated == pytest.approx(2 - math.log(9 / 4) / math.log(3), abs=1e-4)


def test_full_measure_family_loses_nothing():
    spec = NestedFamilySpec.from_sequences(2, lambda n: 1.0, lambda n: 2.0**-n)
    b = mcmullen_bound(spec, 50)
    assert b.extrapolated == 2
    assert all(v == 2 for _, v in b.partials)


def test_invalid_specs():
    with pytest.raises(InvalidSpecError):
        mcmullen_partials(NestedFamilySpec.from_sequences(1, lambda n: 1.5, lambda n: 0.5**n), 5)
    with pytest.raises(InvalidSpecError):
        mcmullen_partials(NestedFamilySpec.from_sequences(1, lambda n: 0.5, lambda n: 2.0), 5)
    with pytest.raises(InvalidArgumentError):
        mcmullen_bound(ternary_cantor_spec(), 2)


def test_partials_never_exceed_ambient_dimension():
    spec = NestedFamilySpec.from_sequences(2, lambda n: 0.3 + 0.4 / n, lambda n: 0.2**n)
    assert all(v <= 2 for _, v in mcmullen_partials(spec, 200))


def test_scale_invariance_on_ternary():
    c = 0.37
    scaled = NestedFamilySpec(1, lambda n: math.log(2 / 3), lambda n: math.log(c) - n * math.log(3))
    base = mcmullen_bound(ternary_cantor_spec(), 2000).extrapolated
    assert abs(mcmullen_bound(scaled, 2000).extrapolated - base) < 1e-4
    p = mcmullen_partials(scaled, 2000)
    assert abs(p[-1][1] - base) < 1e-3


def test_analytic_bound_values():
    assert analytic_bound(2.0**60) == pytest.approx(4 / 3 - 0.1)
    assert analytic_bound(2.0**6) == pytest.approx(1 / 3)
    vals = [analytic_bound(10.0**k) for k in range(1, 40)]
    assert all(x < y < 4 / 3 for x, y in zip(vals, vals[1:]))
    with pytest.raises(InvalidArgumentError):
        analytic_bound(1.0)


def test_cylinder_family_requires_a_above_a0(consts):
    bad = with_growth(consts, consts.a0 * 0.9, strict=False)
    with pytest.raises(InvalidConstantsError):
        cylinder_family_spec(bad)


def test_cylinder_family_d2_condition(consts):
    spec = cylinder_family_spec(consts)
    threshold = (4 * consts.eps * (1 + consts.r) * consts.C1**1.5 / (consts.C2 * consts.R1**2.5)) ** (2 / 3)
    assert consts.a > threshold
    assert spec.diam_seq(2) < 1


def test_cylinder_family_diameter_ratio(consts):
    spec = cylinder_family_spec(consts)
    for n in range(2, 8):
        ratio = math.exp(spec.log_diam(n + 1) - spec.log_diam(n))
        expected = consts.C1**1.5 / (consts.C2 * consts.a ** (1.5 * n) * consts.R1**1.5)
        assert ratio == pytest.approx(expected, rel=1e-9)
        assert ratio < 1


def test_cylinder_family_densities_in_unit_interval(consts):
    spec = cylinder_family_spec(consts)
    for n in range(1, 51):
        assert 0 < spec.delta_seq(n) < 1
    assert spec.delta_seq(1) == pytest.approx(consts.M_prime / consts.R2)


@pytest.mark.parametrize("a", [1e3, 1e6, 1e12])
def test_consistency_with_closed_form(consts, a):
    rep = consistency_check(with_growth(consts, a, strict=False), 2000)
    assert rep.gap < 1e-3
    assert rep.passed


def test_consistency_rate_halves(consts):
    c = with_growth(consts, 1e6)
    g1 = consistency_check(c, 1000).raw_gap
    g2 = consistency_check(c, 2000).raw_gap
    assert abs(g2 / g1 - 0.5) < 0.05


def test_partials_eventually_monotone(consts):
    for a in (1e3, 1e6):
        p = [v for _, v in mcmullen_partials(cylinder_family_spec(with_growth(consts, a, strict=False)), 400)]
        tail = np.diff(p[200:])
        assert np.all(tail > 0) or np.all(tail < 0)


def test_report_json(consts):
    rep = consistency_check(with_growth(consts, 1e6), 50)
    data = rep.to_json()
    assert {"a", "n_max", "partials", "extrapolated", "analytic", "gap"} <= set(data)


def test_box_count_cantor():
    pts = cantor_points(level=14, count=10_000)
    d = box_count_dimension(np.column_stack([pts, np.zeros_like(pts)]), (3.0**-7, 3.0**-2), 8)
    assert abs(d - 0.63) < 0.05


def test_box_count_square():
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1, (100_000, 2))
    assert abs(box_count_dimension(pts, (1 / 64, 1 / 4), 8) - 2.0) < 0.05


def test_box_count_rejects_degenerate_input():
    with pytest.raises(InvalidArgumentError):
        box_count_dimension(np.zeros((10, 2)), (0.1, 1))
    with pytest.raises(InvalidArgumentError):
        box_count_dimension(np.random.default_rng(0).uniform(size=(2000, 2)), (0.5, 0.1))


def test_box_count_of_deepest_roots_is_reported(tree4, capsys):
    roots = np.array([complex(c.boundary_root) for c in tree4.level(tree4.depth)])
    # too few points for box counting over several scales; the spread is logged instead
    spread = np.ptp(np.abs(roots - roots[0]))
    print(f"deepest-level roots: {len(roots)} points, spread {spread:.3e}")
    assert len(roots) == tree4.branching ** (tree4.depth - 1)
