"""Invariant checks run by ``weierdim verify all``.

Each check returns a :class:`CheckResult`; the suite is a quick version of the
test suite (a depth-3 family instead of depth 4) so that it finishes in well
under a minute.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import geometry
from .cantor import (
    build_family,
    choose_constants,
    escaping_parameter,
    family_stats,
    required_dps,
    solve_prepole_param,
    with_growth,
)
from .dimension import cantor_dust_spec, consistency_check, mcmullen_bound, ternary_cantor_spec
from .dynamics import classify_beta, h_n, h_n_prime_recursive
from .lattice import Lattice, make_pole_critical_lattice, select_poles
from .weierstrass import EllipticEvaluator, critical_points, critical_values, estimate_pole_constants


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail, "seconds": round(self.seconds, 3)}


def default_eps0(lattice) -> float:
    return 0.2 * lattice.min_generator


def check_ode(ev, n=1000, seed=0):
    rng = np.random.default_rng(seed)
    l1, l2 = ev.lattice.lambda1, ev.lattice.lambda2
    z = rng.uniform(0.05, 0.95, n) * l1 + rng.uniform(0.05, 0.95, n) * l2
    P, Pp, _, _ = ev.eval_array(z)
    res = np.abs(Pp**2 - (4 * P**3 - ev.g2 * P - ev.g3)) / (1 + np.abs(P) ** 3)
    worst = float(res.max())
    return worst < 1e-9, f"max scaled residual {worst:.3e}"


def check_critical_values(ev):
    e = critical_values(ev)
    g2, g3 = ev.g2, ev.g3
    errs = [
        abs(sum(e)) / max(abs(x) for x in e),
        abs(e[0] * e[1] + e[1] * e[2] + e[2] * e[0] + g2 / 4) / max(1.0, abs(g2)),
        abs(e[0] * e[1] * e[2] - g3 / 4) / abs(g3),
    ]
    return max(errs) < 1e-8, f"relative errors {', '.join(f'{x:.2e}' for x in errs)}"


def check_homogeneity(ev, seed=0):
    rng = np.random.default_rng(seed)
    alpha = complex(rng.uniform(0.5, 2), rng.uniform(-1, 1))
    lat = ev.lattice
    ev2 = EllipticEvaluator(Lattice(alpha * lat.lambda1, alpha * lat.lambda2))
    z = rng.uniform(0.1, 0.9, 50) * lat.lambda1 + rng.uniform(0.1, 0.9, 50) * lat.lambda2
    P, _, _, _ = ev.eval_array(z)
    P2, _, _, _ = ev2.eval_array(alpha * z)
    err = float(np.max(np.abs(P2 - P / alpha**2) / np.abs(P / alpha**2)))
    err_g3 = abs(ev2.g3 - ev.g3 / alpha**6) / abs(ev.g3 / alpha**6)
    worst = max(err, err_g3)
    return worst < 1e-8, f"max relative error {worst:.2e}"


def check_pole_critical(ms=(-1, -3, -5)):
    worst = 0.0
    for m in ms:
        lat = make_pole_critical_lattice(m)
        ev = EllipticEvaluator(lat)
        gamma1 = lat.lambda1
        val = ev.eval(gamma1 / 2)[0]
        worst = max(worst, abs(val - m * gamma1) / abs(gamma1))
    return worst < 1e-8, f"max |wp(gamma1/2) - m gamma1| / |gamma1| = {worst:.2e}"


def check_derivative(ev, consts, tree):
    worst = 0.0
    hp = ev.with_dps(tree.dps)
    with hp.precision():
        for cyl in tree.cylinders.values():
            beta = cyl.interior_sample
            for n in range(1, cyl.level + 1):
                d1 = h_n(hp, beta, n).derivative
                d2 = h_n_prime_recursive(hp, beta, n)
                worst = max(worst, float(abs(d1 - d2) / abs(d2)))
    return worst < 1e-20, f"product formula vs chain rule, max relative difference {worst:.2e}"


def check_family(ev, consts, tree):
    problems = []
    for c in tree.cylinders.values():
        if c.parent is not None:
            parent = tree.cylinders[c.parent]
            origin, scale = parent.boundary_root, parent.scale
            inside, total = geometry.contains_all(parent.local(), parent.local(c.boundary_samples, origin, scale))
            if inside != total:
                problems.append(f"{c.id}: {total - inside} samples outside parent")
        if c.level >= 2 and c.diam_measured > consts.d_bound(c.level):
            problems.append(f"{c.id}: diameter above bound")
        if c.distortion_measured > consts.distortion_bound(c.level):
            problems.append(f"{c.id}: distortion above bound")
        if c.residual_max > 1e-8:
            problems.append(f"{c.id}: boundary residual {c.residual_max:.1e}")
        if not c.injective:
            problems.append(f"{c.id}: boundary not simple")
    for s in family_stats(tree):
        if s.delta_full is not None and s.delta_full < s.delta_bound:
            problems.append(f"level {s.level}: density {s.delta_full:.2e} below bound {s.delta_bound:.2e}")
    return not problems, "; ".join(problems) or f"{len(tree.cylinders)} cylinders nested within bounds"


def check_prepole(ev, consts):
    hp = ev.with_dps(40)
    with hp.precision():
        e1 = hp.eval_mp(critical_points(hp, mp=True)[0])[0]
        worst = 0.0
        for p in select_poles(hp.lattice, consts.R(2), consts.phi, consts.eps, 10):
            beta = solve_prepole_param(hp, consts, None, p, 1)
            exact = (p.l * hp.mp_l1 + p.m * _l2(hp)) / e1
            worst = max(worst, float(abs(beta - exact) / abs(exact)))
    return worst < 1e-10, f"max relative distance to b / wp(c1): {worst:.2e}"


def _l2(hp):
    return hp.mp_l2 if hp.lattice.orientation > 0 else -hp.mp_l2


def check_mcmullen():
    t = abs(mcmullen_bound(ternary_cantor_spec(), 50).extrapolated - math.log(2) / math.log(3))
    d = abs(mcmullen_bound(cantor_dust_spec(), 2000).extrapolated - math.log(4) / math.log(3))
    return t < 1e-6 and d < 1e-4, f"ternary error {t:.1e}, dust error {d:.1e}"


def check_consistency(consts):
    gaps = []
    values = []
    for a in (1e3, 1e6, 1e12):
        rep = consistency_check(with_growth(consts, a, strict=False), 2000)
        gaps.append(rep.gap)
        values.append(rep.extrapolated)
    ok = max(gaps) < 1e-3 and values[0] < values[1] < values[2] < 4 / 3
    return ok, f"gaps {', '.join(f'{g:.1e}' for g in gaps)}"


def check_escaping(ev, consts, depth=5):
    beta = escaping_parameter(ev, consts, None, depth)
    hp = ev.with_dps(required_dps(consts, depth))
    cl = classify_beta(hp, beta, depth, consts.R1)
    pts = [abs(complex(z)) for z in cl.trace.points[1:]]
    ok_growth = all(pts[n - 1] > consts.R(n) for n in range(1, depth + 1))
    ok_growth &= all(pts[n - 1] > 2**n * consts.R1 for n in range(2, depth + 1))
    ok_sym = all(s.kind == "escaping" and s.n == depth for s in cl.statuses)
    return ok_growth and ok_sym, f"|z_n| = {', '.join(f'{x:.3e}' for x in pts)}; statuses {[s.kind for s in cl.statuses]}"


def run_all(m: int = -3, r: float = 0.02, depth: int = 3, branching: int = 2, threads=None) -> list[CheckResult]:
    results = []

    def run(name, fn, *args):
        t0 = time.perf_counter()
        try:
            ok, detail = fn(*args)
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))

    lat = make_pole_critical_lattice(m)
    ev = EllipticEvaluator(lat)
    run("differential equation", check_ode, ev)
    run("homogeneity", check_homogeneity, ev)
    run("critical value identities", check_critical_values, ev)
    run("pole-critical lattices", check_pole_critical)
    run("McMullen oracles", check_mcmullen)
    pd = estimate_pole_constants(ev, default_eps0(lat), r)
    consts = choose_constants(ev, pd)
    run("cylinder-family consistency with 4/3 - 6 log2 / log a", check_consistency, consts)
    run("prepole roots at level one", check_prepole, ev, consts)
    tree = None
    t0 = time.perf_counter()
    try:
        tree = build_family(ev, consts, depth, branching, threads=threads)
        results.append(CheckResult("family construction", True, f"depth {depth}", time.perf_counter() - t0))
    except Exception as exc:
        results.append(CheckResult("family construction", False, f"{type(exc).__name__}: {exc}", time.perf_counter() - t0))
    if tree is not None:
        run("nesting, diameters, distortion, densities", check_family, ev, consts, tree)
        run("derivative product formula", check_derivative, ev, consts, tree)
    run("escaping certificate", check_escaping, ev, consts)
    return results
