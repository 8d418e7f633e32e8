"""Nested cylinder families in parameter space.

A cylinder of level n is the component of h_n^{-1}(U(b, eps)) whose apex is a
root of h_n(beta) = b, for a target pole b drawn from the half-annulus of
radius R_n.  Cylinders are represented by their apex (a prepole parameter, found
by Newton's method) and a polygon obtained by pulling back sampled boundary
points of the segment U(b, eps).

Cylinders shrink superexponentially (diameters near 1e-28 at level four for
typical constants), so all parameter-space work runs in gmpy2 arithmetic at a
precision chosen from the analytic diameter bounds.  Geometric measurements are
made in local float coordinates (beta - origin) / scale.
"""

from __future__ import annotations

import cmath
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from . import geometry
from .dynamics import h_n
from .errors import (
    ConstructionInfeasibleError,
    InvalidArgumentError,
    InvalidConstantsError,
    RootNotFoundError,
)
from .lattice import LatticePoint, count_poles_in_half_annulus, select_poles
from .roots import damped_newton, subdivide_roots
from .weierstrass import EllipticEvaluator, PoleLocalData, critical_points, critical_values

ALPHA = math.sin(math.pi / 8)
HALF_ANGLE = 3 * math.pi / 8
R_LIMIT = 0.25 - 1 / (2 * ALPHA + 4)


# --------------------------------------------------------------------- segments
@dataclass(frozen=True)
class Segment:
    """Closed circular sector {|Arg(z - apex)| <= 3pi/8, |z - apex| <= eps}."""

    apex: complex
    eps: float
    angular_halfwidth: float = HALF_ANGLE

    @property
    def area(self) -> float:
        return self.angular_halfwidth * self.eps**2

    def contains(self, z) -> bool:
        d = complex(z - self.apex)
        if d == 0:
            return True
        return abs(d) <= self.eps and abs(cmath.phase(d)) <= self.angular_halfwidth

    def boundary_offsets(self, n: int) -> list[complex]:
        """``n`` counter-clockwise boundary points relative to the apex, apex first."""
        return segment_offsets(self.eps, n, self.angular_halfwidth)

    def distance_to_boundary(self, z) -> float:
        p = complex(z - self.apex)
        hw = self.angular_halfwidth
        cands = []
        for s in (-1, 1):
            e = cmath.exp(1j * s * hw)
            t = min(max((p * e.conjugate()).real, 0.0), self.eps)
            cands.append(abs(p - t * e))
        if p != 0 and abs(cmath.phase(p)) <= hw:
            cands.append(abs(abs(p) - self.eps))
        else:
            cands.extend(abs(p - self.eps * cmath.exp(1j * s * hw)) for s in (-1, 1))
        return min(cands)


def segment_offsets(eps: float, n: int, hw: float = HALF_ANGLE) -> list[complex]:
    n_ray = max(1, n // 4)
    n_arc = n - 2 * n_ray
    out = []
    e_lo, e_hi = cmath.exp(-1j * hw), cmath.exp(1j * hw)
    out.extend(eps * (j / n_ray) * e_lo for j in range(n_ray))
    out.extend(eps * cmath.exp(1j * (-hw + 2 * hw * j / n_arc)) for j in range(n_arc))
    out.extend(eps * (1 - j / n_ray) * e_hi for j in range(n_ray))
    return out


# -------------------------------------------------------------------- constants
@dataclass(frozen=True)
class BuildConstants:
    eps0: float
    eps: float
    r: float
    R1: float
    R2: float
    a0: float
    a: float
    phi: float
    C1: float
    C2: float
    M1: float
    M2: float
    alpha: float = ALPHA
    e1: complex = 0j
    a1: float = 0.0
    a0_terms: tuple = ()
    lattice_area: float = 1.0
    eps_binding: str = ""
    a_requested: float | None = None

    def R(self, n: int) -> float:
        return self.R1 if n == 1 else self.a ** (n - 1) * self.R1

    def d_bound(self, n: int) -> float:
        """Analytic diameter bound of a level-n cylinder (2r at level one)."""
        if n == 1:
            return 2 * self.r
        return 4 * self.eps * (1 + self.r) / ((self.C2 / self.C1**1.5) ** (n - 1) * self.a ** (0.75 * n * (n - 1)) * self.R1 ** ((3 * n - 1) / 2))

    def log10_d_bound(self, n: int) -> float:
        if n == 1:
            return math.log10(2 * self.r)
        return (
            math.log10(4 * self.eps * (1 + self.r))
            - (n - 1) * math.log10(self.C2 / self.C1**1.5)
            - 0.75 * n * (n - 1) * math.log10(self.a)
            - (3 * n - 1) / 2 * math.log10(self.R1)
        )

    def derivative_bounds(self, n: int) -> tuple[float, float]:
        """Two-sided bounds on |h_n'| over a level-n cylinder (n >= 2)."""
        core = self.a ** (0.75 * n * (n - 1)) * self.R1 ** ((3 * n - 1) / 2)
        lo = (self.C2 / self.C1**1.5) ** (n - 1) * core / (2 * (1 + self.r))
        hi = 5 / (2 * (1 - self.r)) * (2**1.5 * self.C2 / self.C1**1.5) ** (n - 1) * core
        return lo, hi

    def distortion_bound(self, n: int) -> float:
        return 5 * (1 + self.r) / (1 - self.r) * 2 ** (1.5 * (n - 1)) if n >= 2 else 1.0

    @property
    def M(self) -> float:
        r, C1, C2 = self.r, self.C1, self.C2
        return 2**3 * (1 - r) ** 6 * C1**3 / (5**6 * (1 + r) ** 6 * C2**2)

    @property
    def M_prime(self) -> float:
        r, C1, C2, e = self.r, self.C1, self.C2, self.eps
        return 3 * e**2 * (1 - r) ** 4 * C1**3 / (2**7 * 5**4 * r**2 * (1 + r) ** 2 * C2**2 * self.R1**2)

    def density_bound(self, n: int) -> float:
        if n == 1:
            return self.M_prime / (self.a * self.R1)
        return self.M / (2 ** (9 * n) * self.R(n + 1))

    def to_json(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if isinstance(v, complex):
                v = [v.real, v.imag]
            elif isinstance(v, tuple):
                v = list(v)
            out[k] = v
        return out


def segment_is_injective(ev: EllipticEvaluator, eps: float, n_pairs: int = 1000, seed: int = 0) -> bool:
    """Sampled check that wp separates points of a segment at a pole.

    The other preimages of wp(z) are the points +-z + lattice; for z in a sector
    of aperture below pi none of them lies in the sector, and this routine
    confirms on random pairs that wp(z) != wp(w) whenever z != w.
    """
    rng = np.random.default_rng(seed)

    def draw(k):
        rad = eps * np.sqrt(rng.uniform(1e-6, 1, k))
        ang = rng.uniform(-HALF_ANGLE, HALF_ANGLE, k)
        return rad * np.exp(1j * ang)

    z, w = draw(n_pairs), draw(n_pairs)
    Pz, Ppz, _, _ = ev.eval_array(z)
    Pw, _, _, _ = ev.eval_array(w)
    # |wp(z) - wp(w)| should be comparable to |z - w| |wp'| rather than vanish
    sep = np.abs(Pz - Pw) / (np.abs(z - w) * np.abs(Ppz) + 1e-300)
    # reflected points -z are the only competing preimages near the pole
    return bool(np.all(sep > 1e-6)) and bool(np.all(np.abs(np.angle(-z)) > HALF_ANGLE))


def _a0_terms(C1, C2, R1, eps, r, a1):
    return (
        2.0,
        a1,
        1 / R1,
        3 * C1**1.5 / (C2 * R1),
        6**4 * C1**6 / (C2**4 * R1**5),
        (4 * eps * (1 + r) * C1**1.5 / (C2 * R1**2.5)) ** (2 / 3),
        math.sqrt(C1) / (C2 ** (1 / 3) * math.sqrt(R1)),
    )


def _sector_radii(apex: complex, eps: float, n: int = 4096) -> tuple[float, float]:
    offs = np.asarray(segment_offsets(eps, n), dtype=np.complex128)
    r = np.abs(apex + offs)
    return float(r.min()), float(r.max())


def verify_cover(ev: EllipticEvaluator, consts: BuildConstants, phi: float | None = None, n_samples: int = 1000) -> tuple[bool, int]:
    """Check by sampling that every z with |z| > R2 and phi <= arg z <= phi + pi
    has a preimage under g_beta in the segment U(0, eps), for beta on |beta - 1| = r.

    Samples cover the inner arc and the two bounding rays of the region.
    Returns (all_ok, number_of_failures).
    """
    phi = consts.phi if phi is None else phi
    R2 = consts.a * consts.R1
    n_arc = n_samples // 2
    n_ray = (n_samples - n_arc) // 2
    ang = phi + math.pi * (np.arange(n_arc) + 0.5) / n_arc
    zs = [R2 * 1.000001 * np.exp(1j * ang)]
    radii = R2 * np.logspace(0.000001, 3, n_ray)
    zs += [radii * np.exp(1j * phi), radii * np.exp(1j * (phi + math.pi))]
    z = np.concatenate(zs)
    betas = [1.0] + [1 + consts.r * cmath.exp(2j * math.pi * k / 8) for k in range(8)]
    failures = 0
    for beta in betas:
        w = np.sqrt(beta / z)
        for _ in range(40):
            G, _, _ = ev.laurent(w)
            w = np.sqrt(beta * G / z)
        # Newton polish on beta * wp(w) = z
        for _ in range(3):
            P, Pp, _, _ = ev.eval_array(w)
            w = w - (beta * P - z) / (beta * Pp)
        P, _, _, _ = ev.eval_array(w)
        resid = np.abs(beta * P - z) / np.abs(z)
        inside = (np.abs(w) <= consts.eps) & (np.abs(np.angle(w)) <= HALF_ANGLE)
        failures += int(np.count_nonzero(~(inside & (resid < 1e-8))))
    return failures == 0, failures


def choose_constants(
    ev: EllipticEvaluator,
    pole_data: PoleLocalData,
    a="auto",
    eps: float | None = None,
    r: float | None = None,
) -> BuildConstants:
    """Constants of the construction from the pole-local data.

    eps is the largest dyadic number satisfying the segment conditions, R1 sits
    just inside the segment at wp(c1), a0 is the maximum of the seven growth
    terms and a = max(2 a0, requested a).
    """
    r = pole_data.r if r is None else float(r)
    if not 0 < r < R_LIMIT:
        raise ConstructionInfeasibleError(f"r = {r} violates 0 < r < 1/4 - 1/(2 alpha + 4) = {R_LIMIT:.6f}")
    if r > pole_data.r * (1 + 1e-12):
        raise ConstructionInfeasibleError("r exceeds the radius for which the argument bounds were estimated")
    e1 = complex(critical_values(ev)[0])
    ae1 = abs(e1)
    C1, C2 = pole_data.C1, pole_data.C2
    limits = {"eps0": pole_data.eps0, "|wp(c1)|/3": ae1 / 3, "r|wp(c1)|": r * ae1}
    if eps is None:
        chosen = None
        for k in range(0, 41):
            cand = 2.0**-k
            if cand < pole_data.eps0 and cand < ae1 / 3 and cand <= r * ae1 and segment_is_injective(ev, cand):
                chosen = cand
                break
        if chosen is None:
            raise ConstructionInfeasibleError("no dyadic eps satisfies the segment conditions")
        eps = chosen
    else:
        eps = float(eps)
        if not (eps < pole_data.eps0 and eps < ae1 / 3 and eps <= r * ae1):
            raise ConstructionInfeasibleError(f"eps = {eps} violates the segment conditions {limits}")
    binding = min(limits, key=limits.get)
    rmin, rmax = _sector_radii(e1, eps)
    R1 = rmin * (1 - 1e-6)
    if not 2 * R1 > rmax:
        raise ConstructionInfeasibleError("the segment at wp(c1) does not fit in an annulus P(R1, 2R1)")
    a1 = C1 / ((1 - ALPHA) * eps**2 * R1)
    terms = _a0_terms(C1, C2, R1, eps, r, a1)
    a0 = max(terms)
    if a == "auto" or a is None:
        a_req = None
        a_val = 2 * a0
    else:
        a_req = float(a)
        a_val = max(2 * a0, a_req)
    phi = (pole_data.M1 + pole_data.M2) / 2 - math.pi / 2
    consts = BuildConstants(
        eps0=pole_data.eps0,
        eps=eps,
        r=r,
        R1=R1,
        R2=a_val * R1,
        a0=a0,
        a=a_val,
        phi=phi,
        C1=C1,
        C2=C2,
        M1=pole_data.M1,
        M2=pole_data.M2,
        e1=e1,
        a1=a1,
        a0_terms=terms,
        lattice_area=ev.lattice.area,
        eps_binding=binding,
        a_requested=a_req,
    )
    ok, _ = verify_cover(ev, consts)
    if not ok:
        for k in range(64):
            trial = 2 * math.pi * k / 64
            if verify_cover(ev, consts, phi=trial)[0]:
                return _replace(consts, phi=trial)
        raise ConstructionInfeasibleError("no direction phi passes the half-plane cover check")
    return consts


def _replace(consts: BuildConstants, **kw) -> BuildConstants:
    d = dict(consts.__dict__)
    d.update(kw)
    return BuildConstants(**d)


def with_growth(consts: BuildConstants, a: float, strict: bool = True) -> BuildConstants:
    """Same constants with a different growth factor a (and R2 = a R1)."""
    if strict and not a > consts.a0:
        raise InvalidConstantsError(f"a = {a} must exceed a0 = {consts.a0}")
    return _replace(consts, a=float(a), R2=float(a) * consts.R1, a_requested=float(a))


def required_dps(consts: BuildConstants, depth: int) -> int:
    """Working precision for cylinders down to ``depth``.

    The smallest cylinder is at most the analytic diameter bound and at least
    that bound divided by 10 * 2^{3(n-1)/2} (the distortion budget); thirty
    further digits leave room for Newton residuals and area measurements.
    """
    n = max(depth, 2)
    lower = consts.log10_d_bound(n) - math.log10(10 * 2 ** (1.5 * (n - 1)))
    return int(math.ceil(-lower)) + 30


# -------------------------------------------------------------------- cylinders
@dataclass
class Cylinder:
    id: str
    level: int
    target_pole: object  # gmpy2 mpc
    pole_index: tuple[int, int] | None
    boundary_root: object  # gmpy2 mpc, h_n(root) = target_pole
    root_derivative: object
    interior_sample: object
    boundary_samples: list
    parent: str | None
    scale: float  # eps / |h_n'(root)|, the predicted linear size
    diam_measured: float = 0.0
    area_measured: float = 0.0
    distortion_measured: float = 1.0
    residual_max: float = 0.0
    injective: bool = True
    boundary_derivatives: list = field(default_factory=list)
    full_density: float | None = None

    def local(self, points=None, origin=None, scale: float | None = None) -> np.ndarray:
        """Float coordinates (p - origin) / scale, computed in high precision."""
        origin = self.boundary_root if origin is None else origin
        scale = self.scale if scale is None else scale
        pts = self.boundary_samples if points is None else points
        return np.array([complex((p - origin) / scale) for p in pts], dtype=np.complex128)

    def to_json(self) -> dict:
        root = complex(self.boundary_root)
        pole = complex(self.target_pole)
        offs = self.local(scale=1.0)
        return {
            "id": self.id,
            "level": self.level,
            "parent_id": self.parent,
            "pole": [pole.real, pole.imag],
            "pole_index": list(self.pole_index) if self.pole_index is not None else None,
            "root": [root.real, root.imag],
            "root_exact": [str(self.boundary_root.real), str(self.boundary_root.imag)],
            "boundary": [[complex(p).real, complex(p).imag] for p in self.boundary_samples],
            "boundary_offsets": [[z.real, z.imag] for z in offs],
            "diam": self.diam_measured,
            "area": self.area_measured,
            "distortion": self.distortion_measured,
            "residual": self.residual_max,
            "injective": self.injective,
            "full_density": self.full_density,
        }


@dataclass
class CylinderTree:
    consts: BuildConstants
    depth: int
    branching: int
    cylinders: dict  # id -> Cylinder, in (level, pole order) order
    dps: int
    failures: list = field(default_factory=list)

    def level(self, n: int) -> list[Cylinder]:
        return [c for c in self.cylinders.values() if c.level == n]

    def children(self, cid: str) -> list[Cylinder]:
        return [c for c in self.cylinders.values() if c.parent == cid]

    def to_json(self) -> dict:
        return {
            "depth": self.depth,
            "branching": self.branching,
            "dps": self.dps,
            "constants": self.consts.to_json(),
            "cylinders": [c.to_json() for c in self.cylinders.values()],
            "failures": self.failures,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)


def _pole_mp(ev: EllipticEvaluator, pole):
    if isinstance(pole, LatticePoint):
        return pole.l * ev.mp_l1 + pole.m * (ev.mp_l2 if ev.lattice.orientation > 0 else -ev.mp_l2), (pole.l, pole.m)
    return ev.to_mp(pole), None


def _residual_tol(ev: EllipticEvaluator, consts: BuildConstants) -> float:
    return consts.eps * 10.0 ** (-min(25, ev.dps // 2))


def _hn_fdf(ev, n, target):
    def f_df(x):
        v = h_n(ev, x, n)
        if v.singular:
            return mpc("inf"), mpc(1)
        return v.value - target, v.derivative

    return f_df


def _inside_parent(parent: Cylinder | None, beta) -> bool:
    if parent is None or not parent.boundary_samples:
        return True
    poly = parent.local()
    z = complex((beta - parent.boundary_root) / parent.scale)
    return geometry.contains_point(poly, z)


def solve_prepole_param(
    ev: EllipticEvaluator,
    consts: BuildConstants,
    parent: Cylinder | None,
    target_pole,
    n: int,
    seed=None,
):
    """Parameter beta with h_n(beta) = target_pole, inside the parent cylinder.

    For n = 1 the root is target_pole / wp(c1), a pole of h_2.  For n >= 2 the
    seed comes from inverting wp near the parent's pole and the parent's linear
    approximation of h_{n-1}; damped Newton then polishes it.  If Newton fails
    or leaves the parent it restarts from the parent's interior sample, and
    finally falls back to argument-principle subdivision of the parent's box.
    """
    with ev.precision():
        b, _ = _pole_mp(ev, target_pole)
        tol = _residual_tol(ev, consts)
        f_df = _hn_fdf(ev, n, b)
        if n == 1:
            # h_1 is linear, so Newton from any seed lands on b / wp(c1) at once
            x0 = ev.to_mp(seed) if seed is not None else (parent.interior_sample if parent is not None else mpc(1))
            res = damped_newton(f_df, x0, tol * max(1.0, float(abs(b))))
            if res.converged:
                return res.root
            raise RootNotFoundError("level-one root did not converge")
        seeds = []
        if seed is not None:
            seeds.append(ev.to_mp(seed))
        if parent is not None:
            seeds.append(_inverse_branch_seed(ev, parent, b))
            seeds.append(parent.interior_sample)
        if not seeds:
            raise InvalidArgumentError("a parent cylinder or an explicit seed is required for n >= 2")
        for s in seeds:
            res = damped_newton(f_df, s, tol, max_iter=60)
            if res.converged and abs(res.residual) < 1e-9 * abs(b) and _inside_parent(parent, res.root):
                return res.root
        if parent is not None:
            root = _subdivision_root(ev, parent, n, b, f_df, tol)
            if root is not None:
                return root
        raise RootNotFoundError(f"no root of h_{n} = {complex(b)} found in the parent cylinder")


def _inverse_branch_seed(ev: EllipticEvaluator, parent: Cylinder, b):
    """beta with beta_p * wp(w) = b for w near the parent's pole, mapped back linearly."""
    bp, beta_p, dp = parent.target_pole, parent.boundary_root, parent.root_derivative
    G = mpc(1)
    w = bp
    for _ in range(6):
        w = bp + gmpy2.sqrt(beta_p * G / b)
        G, _, _ = ev.laurent(w)
    return beta_p + (w - bp) / dp


def _subdivision_root(ev, parent, n, b, f_df, tol):
    loc = parent.local()
    center = complex(np.mean(loc))
    half = float(np.max(np.abs(loc - center))) * 1.05
    scale = parent.scale
    origin = parent.boundary_root

    def f(x):
        v = h_n(ev, origin + mpc(complex(x)) * scale, n)
        if v.singular:
            return complex(1e300)
        return complex((v.value - b) / abs(b))

    try:
        boxes = subdivide_roots(f, center, half, min_half=half * 2.0**-12, max_boxes=2048)
    except RootNotFoundError:
        return None
    for c in boxes:
        res = damped_newton(f_df, origin + mpc(c) * scale, tol)
        if res.converged and _inside_parent(parent, res.root):
            return res.root
    return None


def _pullback(ev, consts, n, b, pole_index, root, parent_id, cid, samples):
    """Pull back the boundary of U(b, eps) under h_n starting from the apex ``root``."""
    v = h_n(ev, root, n)
    D = v.derivative
    scale = consts.eps / float(abs(D))
    tol = _residual_tol(ev, consts)
    offsets = segment_offsets(consts.eps, samples)

    def solve_targets(offs):
        pts, ders, resid = [], [], 0.0
        prev, prev_d, prev_t = root, D, b
        for o in offs:
            t = b + mpc(o)
            if o == 0:
                pts.append(root)
                ders.append(D)
                continue
            x0 = prev + (t - prev_t) / prev_d
            res = damped_newton(_hn_fdf(ev, n, t), x0, tol, max_iter=40)
            if not res.converged:
                raise RootNotFoundError(f"boundary pullback failed at level {n}")
            d = h_n(ev, res.root, n).derivative
            pts.append(res.root)
            ders.append(d)
            resid = max(resid, float(res.residual) / consts.eps)
            prev, prev_d, prev_t = res.root, d, t
        return pts, ders, resid

    pts, ders, resid = solve_targets(offsets)
    loc = np.array([complex((p - root) / scale) for p in pts])
    injective = geometry.is_simple(loc) and geometry.shoelace_area(loc) > 0
    if not injective:
        offsets = segment_offsets(consts.eps, 4 * samples)
        pts, ders, resid = solve_targets(offsets)
        loc = np.array([complex((p - root) / scale) for p in pts])
        injective = geometry.is_simple(loc) and geometry.shoelace_area(loc) > 0
    mid = b + mpc(consts.eps / 2)
    res = damped_newton(_hn_fdf(ev, n, mid), root + (mid - b) / D, tol)
    interior = res.root
    d_int = h_n(ev, interior, n).derivative
    mags = [float(abs(d)) for d in ders] + [float(abs(d_int))]
    return Cylinder(
        id=cid,
        level=n,
        target_pole=b,
        pole_index=pole_index,
        boundary_root=root,
        root_derivative=D,
        interior_sample=interior,
        boundary_samples=pts,
        parent=parent_id,
        scale=scale,
        diam_measured=scale * geometry.diameter(loc),
        area_measured=scale**2 * abs(geometry.shoelace_area(loc)),
        distortion_measured=max(mags) / min(mags),
        residual_max=resid,
        injective=injective,
        boundary_derivatives=[float(m) for m in mags[:-1]],
    )


def level_one_cylinder(ev: EllipticEvaluator, consts: BuildConstants, samples: int = 64) -> Cylinder:
    """A_1 = h_1^{-1}(U(wp(c1), eps)), an explicit similarity image of the segment."""
    with ev.precision():
        e1 = ev.eval_mp(critical_points(ev, mp=True)[0])[0]
        root = mpc(1)
        offs = segment_offsets(consts.eps, samples)
        pts = [root + mpc(o) / e1 for o in offs]
        scale = consts.eps / float(abs(e1))
        loc = np.array([complex((p - root) / scale) for p in pts])
        interior = root + mpc(consts.eps / 2) / e1
        l, m, _ = _nearest_index(ev, complex(e1))
        return Cylinder(
            id="1",
            level=1,
            target_pole=e1,
            pole_index=(l, m),
            boundary_root=root,
            root_derivative=e1,
            interior_sample=interior,
            boundary_samples=pts,
            parent=None,
            scale=scale,
            diam_measured=scale * geometry.diameter(loc),
            area_measured=scale**2 * abs(geometry.shoelace_area(loc)),
            distortion_measured=1.0,
            residual_max=0.0,
            injective=True,
            boundary_derivatives=[float(abs(e1))] * len(pts),
        )


def _nearest_index(ev, z):
    from .lattice import nearest_lattice_point

    return nearest_lattice_point(ev.lattice, z)


def build_child(ev, consts, parent: Cylinder, pole, index: int, samples: int = 64) -> Cylinder:
    n = parent.level + 1
    with ev.precision():
        b, pidx = _pole_mp(ev, pole)
        root = solve_prepole_param(ev, consts, parent, pole, n)
        return _pullback(ev, consts, n, b, pidx, root, parent.id, f"{parent.id}.{index}", samples)


def _q_boundary(R: float, phi: float, eps: float, n_arc: int, n_line: int) -> list[complex]:
    """Counter-clockwise boundary of {z : B(z, eps) inside the half-annulus of radius R}."""
    ri, ro = R + eps, 2 * R - eps
    rot = cmath.exp(1j * phi)
    pts = []
    xs_i, xs_o = math.sqrt(ri**2 - eps**2), math.sqrt(ro**2 - eps**2)
    pts += [complex(xs_i + (xs_o - xs_i) * j / n_line, eps) for j in range(n_line)]
    t0, t1 = math.asin(eps / ro), math.pi - math.asin(eps / ro)
    pts += [ro * cmath.exp(1j * (t0 + (t1 - t0) * j / n_arc)) for j in range(n_arc)]
    pts += [complex(-xs_o + (xs_o - xs_i) * j / n_line, eps) for j in range(n_line)]
    s0, s1 = math.pi - math.asin(eps / ri), math.asin(eps / ri)
    pts += [ri * cmath.exp(1j * (s0 + (s1 - s0) * j / n_arc)) for j in range(n_arc)]
    return [p * rot for p in pts]


def full_branching_density(ev, consts, parent: Cylinder, n_arc: int = 96, n_line: int = 24) -> float:
    """Density in the parent of the union of all its admissible children.

    All children of a level-n cylinder are pullbacks of segments U(b, eps) with b
    in Q = {z : B(z, eps) inside P+(R_{n+1})}.  The children occupy the fraction
    area(U)/area(cell) of the pullback of Q up to the distortion of h_{n+1}, so
    the density is (3 pi eps^2 / 8) / area(cell) * area(h_{n+1}^{-1}(Q)) / area(parent).
    The pullback of Q is measured by Newton-solving its sampled boundary.
    """
    n = parent.level
    with ev.precision():
        bp, beta_p, dp = parent.target_pole, parent.boundary_root, parent.root_derivative
        qpts = _q_boundary(consts.R(n + 1), consts.phi, consts.eps, n_arc, n_line)
        pre = []
        tol_rel = 1e-14
        for z in qpts:
            t = mpc(z)
            G = mpc(1)
            w = bp
            for _ in range(6):
                w = bp + gmpy2.sqrt(beta_p * G / t)
                G, _, _ = ev.laurent(w)
            x0 = beta_p + (w - bp) / dp
            res = damped_newton(_hn_fdf(ev, n + 1, t), x0, tol_rel * abs(z), max_iter=40)
            if not res.converged:
                raise RootNotFoundError("pullback of the admissible pole region failed")
            pre.append(res.root)
        loc = np.array([complex((p - beta_p) / parent.scale) for p in pre])
        area = parent.scale**2 * abs(geometry.shoelace_area(loc))
    seg_area = HALF_ANGLE * consts.eps**2
    return seg_area / consts.lattice_area * area / parent.area_measured


def thread_count(threads: int | None = None) -> int:
    """Worker count: the request (default all cores), capped by WEIER_THREADS."""
    n = int(threads) if threads is not None else (os.cpu_count() or 1)
    env = os.environ.get("WEIER_THREADS")
    if env:
        n = min(n, int(env))
    return max(1, n)


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def build_family(
    ev: EllipticEvaluator,
    consts: BuildConstants,
    depth: int,
    branching: int,
    samples: int = 64,
    threads: int | None = None,
    full_density: bool = True,
    spare_poles: int = 4,
) -> CylinderTree:
    """Cylinder tree of the given depth with ``branching`` children per cylinder.

    Children of every cylinder target the same poles: the ``branching``
    admissible poles of smallest modulus near the axis of the half-annulus.
    A pole whose root cannot be found is skipped in favour of the next one
    (up to ``spare_poles`` extra) and recorded in ``failures``.
    """
    if depth < 1:
        raise InvalidArgumentError("depth must be at least 1")
    if branching < 1:
        raise InvalidArgumentError("branching must be at least 1")
    need = required_dps(consts, depth)
    hp = ev if (ev.dps is not None and ev.dps >= need) else ev.with_dps(need)
    threads = thread_count(threads)
    root = level_one_cylinder(hp, consts, samples)
    cyls = {root.id: root}
    failures = []
    frontier = [root]
    for n in range(2, depth + 1):
        poles = select_poles(hp.lattice, consts.R(n), consts.phi, consts.eps, branching + spare_poles)

        def make(parent, _poles=poles):
            out = []
            for idx, p in enumerate(_poles):
                if len(out) == branching:
                    break
                try:
                    out.append(build_child(hp, consts, parent, p, len(out), samples))
                except RootNotFoundError as exc:
                    failures.append({"parent": parent.id, "pole_index": [p.l, p.m], "error": str(exc)})
            return out

        results = _map_ordered(lambda p: _with_prec(hp, make, p), [(p,) for p in frontier], threads)
        frontier = []
        for kids in results:
            for c in kids:
                cyls[c.id] = c
                frontier.append(c)
        if not frontier:
            raise RootNotFoundError(f"no cylinder could be built at level {n}")
    if full_density:
        parents = list(cyls.values())
        dens = _map_ordered(lambda c: _with_prec(hp, full_branching_density, hp, consts, c), [(c,) for c in parents], threads)
        for c, d in zip(parents, dens):
            c.full_density = d
    failures.sort(key=lambda f: (f["parent"], f["pole_index"]))
    return CylinderTree(consts=consts, depth=depth, branching=branching, cylinders=cyls, dps=need, failures=failures)


def _with_prec(ev, fn, *args):
    with ev.precision():
        return fn(*args)


@dataclass
class LevelStats:
    level: int
    count: int
    N_n: float
    d_n_measured: float
    d_n_bound: float
    delta_built: float | None
    delta_full: float | None
    delta_bound: float
    distortion_max: float
    distortion_bound: float


STATS_HEADER = (
    "level,count,N_n,d_n_measured,d_n_bound,delta_built,delta_full,delta_bound,distortion_max,distortion_bound"
)


def family_stats(tree: CylinderTree, lattice=None) -> list[LevelStats]:
    """Per-level diameters, densities and pole counts of a built tree.

    Densities are reported for parents at each level: the built density is the
    area fraction covered by the children actually constructed, and the full
    density accounts for every admissible child.  Both are minima over the
    parents of that level.
    """
    c = tree.consts
    out = []
    for n in range(1, tree.depth + 1):
        level = tree.level(n)
        if not level:
            continue
        built, full = [], []
        for p in level:
            kids = tree.children(p.id)
            if kids:
                built.append(sum(k.area_measured for k in kids) / p.area_measured)
            if p.full_density is not None:
                full.append(p.full_density)
        if lattice is not None and n >= 2:
            N = count_poles_in_half_annulus(lattice, c.R(n), c.phi, c.eps)
        else:
            N = 1.0 if n == 1 else float("nan")
        out.append(
            LevelStats(
                level=n,
                count=len(level),
                N_n=N,
                d_n_measured=max(x.diam_measured for x in level),
                d_n_bound=c.d_bound(n),
                delta_built=min(built) if built else None,
                delta_full=min(full) if full else None,
                delta_bound=c.density_bound(n),
                distortion_max=max(x.distortion_measured for x in level),
                distortion_bound=c.distortion_bound(n),
            )
        )
    return out


def stats_csv(stats: list[LevelStats]) -> str:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return f"{v:.17g}"
        return str(v)

    lines = [STATS_HEADER]
    for s in stats:
        lines.append(",".join(fmt(getattr(s, k)) for k in STATS_HEADER.split(",")))
    return "\n".join(lines) + "\n"


def monte_carlo_area(ev: EllipticEvaluator, consts: BuildConstants, cyl: Cylinder, n_points: int = 10_000, seed: int = 0) -> float:
    """Area of a cylinder by forward evaluation: the fraction of random points of
    a bounding box whose image under h_n lands in the segment."""
    loc = cyl.local()
    lo = complex(loc.real.min(), loc.imag.min())
    hi = complex(loc.real.max(), loc.imag.max())
    pad = 0.02 * max(hi.real - lo.real, hi.imag - lo.imag)
    lo -= complex(pad, pad)
    hi += complex(pad, pad)
    rng = np.random.default_rng(seed)
    xs = rng.uniform(lo.real, hi.real, n_points) + 1j * rng.uniform(lo.imag, hi.imag, n_points)
    seg = Segment(0j, consts.eps)
    hits = 0
    with ev.precision():
        for x in xs:
            beta = cyl.boundary_root + mpc(complex(x)) * cyl.scale
            v = h_n(ev, beta, cyl.level, derivative=False)
            if not v.singular and seg.contains(complex(v.value - cyl.target_pole)):
                hits += 1
    box = (hi.real - lo.real) * (hi.imag - lo.imag)
    return hits / n_points * box * cyl.scale**2


def escaping_chain(ev, consts, pole_choices: list | None, depth: int, samples: int = 32) -> list[Cylinder]:
    """Nested cylinders A_1 > A_2 > ... > A_depth along one branch."""
    need = required_dps(consts, depth)
    hp = ev if (ev.dps is not None and ev.dps >= need) else ev.with_dps(need)
    with hp.precision():
        chain = [level_one_cylinder(hp, consts, samples)]
        for n in range(2, depth + 1):
            k = n - 2
            if pole_choices and k < len(pole_choices) and pole_choices[k] is not None:
                poles = [pole_choices[k]]
            else:
                poles = select_poles(hp.lattice, consts.R(n), consts.phi, consts.eps, 4)
            last = None
            for p in poles:
                try:
                    chain.append(build_child(hp, consts, chain[-1], p, 0, samples))
                    break
                except RootNotFoundError as exc:
                    last = exc
            else:
                raise last or RootNotFoundError(f"no pole usable at level {n}")
    return chain


def escaping_parameter(ev, consts, pole_choices: list | None, depth: int):
    """Interior parameter of the deepest cylinder of a branch; its critical orbit
    follows the growth schedule through ``depth`` iterates."""
    if depth < 3:
        raise InvalidArgumentError("depth must be at least 3")
    return escaping_chain(ev, consts, pole_choices, depth)[-1].interior_sample
