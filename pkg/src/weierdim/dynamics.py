"""Iteration of g_beta = beta * wp and the parameter maps h_n(beta) = g_beta^n(c1)."""

from __future__ import annotations

import cmath
import contextlib
import json
import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np

from .errors import IllConditionedError
from .lattice import RHO
from .weierstrass import EllipticEvaluator, critical_points, wp

OVERFLOW = 1e300


@dataclass(frozen=True)
class OrbitStatus:
    """Outcome of an orbit computation.

    ``kind`` is one of ``"escaping"``, ``"prepole"``, ``"bounded"`` and
    ``"unresolved"``.  For ``"bounded"`` the level is the first step whose growth
    certificate failed (or the iteration count when no certificate is requested).
    """

    kind: str
    n: int
    pole: complex | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        if self.pole is not None:
            p = complex(self.pole)
            out["pole"] = [p.real, p.imag]
        return out

    def rotated(self, factor) -> "OrbitStatus":
        if self.pole is None:
            return self
        return OrbitStatus(self.kind, self.n, self.pole * factor)


def Escaping(n):
    return OrbitStatus("escaping", n)


def Prepole(n, pole):
    return OrbitStatus("prepole", n, pole)


def Bounded(n):
    return OrbitStatus("bounded", n)


def NearPoleUnresolved(n):
    return OrbitStatus("unresolved", n)


@dataclass
class OrbitTrace:
    beta: complex
    start: complex
    points: list
    status: OrbitStatus
    radii_checked: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["k,re,im,abs"]
        for k, z in enumerate(self.points):
            z = complex(z)
            lines.append(f"{k},{z.real:.17g},{z.imag:.17g},{abs(z):.17g}")
        lines.append("# status: " + json.dumps(self.status.to_json(), sort_keys=True))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ParamMapValue:
    n: int
    beta: complex
    value: complex
    derivative: complex | None
    singular: bool = False
    level: int | None = None  # iterate reached when singular


def working_precision(ev: EllipticEvaluator, *values):
    """The evaluator's gmpy2 precision when any value is high precision, else a no-op."""
    if any(ev.is_mp(v) for v in values):
        return ev.precision()
    return contextlib.nullcontext()


def growth_threshold(k: int, R_base: float) -> float:
    """Certificate radius at step k: R_base for the first iterate, 2^k R_base after."""
    return R_base if k == 1 else (2.0**k) * R_base


def g_beta(ev: EllipticEvaluator, beta, z):
    return beta * wp(ev, z)


def orbit(ev: EllipticEvaluator, beta, z0, max_n: int, R_base: float | None = None) -> OrbitTrace:
    with working_precision(ev, beta, z0):
        return _orbit(ev, beta, z0, max_n, R_base)


def _orbit(ev, beta, z0, max_n, R_base):
    """Iterate g_beta from z0 for at most ``max_n`` steps and classify the orbit.

    With ``R_base`` the iterates must pass the growth certificate
    |z_1| > R_base and |z_k| >= 2^k R_base (k >= 2); the first failure ends the
    orbit as ``bounded``.  A point within ``ev.prepole_tolerance`` of the lattice
    ends it as ``prepole``.
    """
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    mp = ev.is_mp(beta) or ev.is_mp(z0)
    if mp:
        beta, z0 = ev.to_mp(beta), ev.to_mp(z0)
    tol = ev.snap_radius(z0)
    points = [z0]
    radii = []
    z = z0
    for k in range(0, max_n + 1):
        if k > 0:
            az = abs(z)
            if not (az < math.inf) or az > OVERFLOW:
                ok = R_base is not None and all(abs(points[j]) >= radii[j - 1] for j in range(1, k))
                return OrbitTrace(beta, z0, points[:-1], Escaping(k - 1) if ok and k > 1 else NearPoleUnresolved(k), radii)
        P, Pp, pole, dist = ev.eval(z)
        if k > 0:
            if dist <= tol:
                return OrbitTrace(beta, z0, points, Prepole(k, pole), radii)
            if R_base is not None:
                thr = growth_threshold(k, R_base)
                radii.append(thr)
                if not abs(z) > thr:
                    return OrbitTrace(beta, z0, points, Bounded(k), radii)
        if k == max_n:
            break
        if not mp and not (math.isfinite(abs(P))):
            return OrbitTrace(beta, z0, points, NearPoleUnresolved(k + 1), radii)
        z = beta * P
        points.append(z)
    status = Escaping(max_n) if R_base is not None else Bounded(max_n)
    return OrbitTrace(beta, z0, points, status, radii)


def _forward(ev: EllipticEvaluator, beta, n: int):
    """Iterates z_1..z_n, the factors g'(z_k) for k < n, and the singular level."""
    c1 = critical_points(ev, mp=ev.is_mp(beta))[0]
    P, _, _, _ = ev.eval(c1)
    zs = [beta * P]
    dg = []
    for k in range(1, n):
        P, Pp, _, dist = ev.eval(zs[-1])
        if dist <= ev.snap_radius(beta):
            return zs, dg, k
        zs.append(beta * P)
        dg.append(beta * Pp)
    return zs, dg, None


def _product_formula(beta, zs, dg, n):
    """(1/beta) prod_{k<n} g'(z_k) [z_1 + sum_{k=2}^n z_k / prod_{i<k} g'(z_i)]."""
    prod = 1
    acc = zs[0]
    for k in range(2, n + 1):
        f = dg[k - 2]
        if f == 0:
            raise IllConditionedError(f"derivative factor vanishes at iterate {k - 1}", index=k - 1)
        prod = prod * f
        acc = acc + zs[k - 1] / prod
    return prod * acc / beta


def h_n(ev: EllipticEvaluator, beta, n: int, derivative: bool = True) -> ParamMapValue:
    """h_n(beta) = g_beta^n(c1) with its derivative from the product formula."""
    with working_precision(ev, beta):
        return _h_n(ev, beta, n, derivative)


def _h_n(ev, beta, n, derivative):
    if n < 1:
        raise ValueError("n must be at least 1")
    if ev.is_mp(beta):
        beta = ev.to_mp(beta)
    zs, dg, sing = _forward(ev, beta, n)
    if sing is not None:
        return ParamMapValue(n, beta, zs[-1], None, singular=True, level=sing)
    d = _product_formula(beta, zs, dg, n) if derivative else None
    return ParamMapValue(n, beta, zs[-1], d)


def h_n_prime(ev: EllipticEvaluator, beta, n: int):
    val = h_n(ev, beta, n)
    if val.singular:
        raise IllConditionedError(f"h_{n} is singular at this parameter (pole hit at iterate {val.level})", index=val.level)
    return val.derivative


def h_n_prime_recursive(ev: EllipticEvaluator, beta, n: int):
    """Chain rule h_{k+1}' = wp(h_k) + beta wp'(h_k) h_k', an independent route."""
    with working_precision(ev, beta):
        c1 = critical_points(ev, mp=ev.is_mp(beta))[0]
        e1 = ev.eval(c1)[0]
        z, d = beta * e1, e1
        for _ in range(1, n):
            P, Pp, _, _ = ev.eval(z)
            z, d = beta * P, P + beta * Pp * d
        return d


def symmetry_factors(ev: EllipticEvaluator, mp: bool = False):
    """Factors (1, f2, f3) with orbit(c_i) = f_i * orbit(c1), or None.

    For the hexagonal lattice [lambda1, rho*lambda1] the critical values satisfy
    wp(c2) = rho wp(c1) and wp(c3) = rho^2 wp(c1), and wp(rho z) = rho wp(z)
    propagates this to every iterate.
    """
    if not ev.lattice.is_triangular(1e-9):
        return None
    if mp:
        with ev.precision():
            rho = gmpy2.exp(2 * gmpy2.const_pi() * gmpy2.mpc(0, 1) / 3)
            return 1, rho, rho * rho
    return 1, RHO, RHO * RHO


@dataclass
class Classification:
    beta: complex
    statuses: tuple  # one OrbitStatus per critical point
    trace: OrbitTrace

    @property
    def status(self) -> OrbitStatus:
        return self.statuses[0]


def classify_beta(ev: EllipticEvaluator, beta, depth: int, R_base: float) -> Classification:
    """Classify the three critical orbits; on hexagonal lattices only c1 is iterated."""
    with working_precision(ev, beta):
        return _classify(ev, beta, depth, R_base)


def _classify(ev, beta, depth, R_base):
    cps = critical_points(ev, mp=ev.is_mp(beta))
    tr = orbit(ev, beta, cps[0], depth, R_base)
    fac = symmetry_factors(ev, mp=ev.is_mp(beta))
    if fac is not None:
        statuses = tuple(tr.status.rotated(f) for f in fac)
    else:
        statuses = (tr.status,) + tuple(orbit(ev, beta, c, depth, R_base).status for c in cps[1:])
    return Classification(beta, statuses, tr)


# raster codes
BOUNDED, UNRESOLVED, PREPOLE, ESCAPING = 0, 1, 2, 3


def classify_array(
    ev: EllipticEvaluator,
    betas: np.ndarray,
    depth: int,
    R_base: float,
    pixel_radius: float = 0.0,
    start: complex | None = None,
):
    """Vectorised float classification of many parameters.

    A parameter is marked prepole at level k when the k-th iterate comes within
    max(prepole_tolerance, |h_k'(beta)| * pixel_radius) of a lattice point, that
    is when a root of h_k = b plausibly lies within ``pixel_radius`` of beta.
    Returns (codes, levels).
    """
    betas = np.asarray(betas, dtype=np.complex128)
    shape = betas.shape
    b = betas.ravel()
    if start is None:
        start = critical_points(ev)[0]
    P0, _, _, _ = ev.eval_array(np.array([start]))
    z = b * P0[0]
    dz = np.full_like(b, P0[0])
    codes = np.full(b.shape, ESCAPING, dtype=np.int8)
    levels = np.full(b.shape, depth, dtype=np.int32)
    active = np.ones(b.shape, dtype=bool)
    tol = ev.prepole_tolerance
    with np.errstate(all="ignore"):
        for k in range(1, depth + 1):
            idx = np.flatnonzero(active)
            if idx.size == 0:
                break
            zk = z[idx]
            finite = np.isfinite(zk) & (np.abs(zk) <= OVERFLOW)
            bad = idx[~finite]
            codes[bad] = np.where(k > 2, ESCAPING, UNRESOLVED)
            levels[bad] = k - 1 if k > 2 else k
            active[bad] = False
            idx = idx[finite]
            zk = z[idx]
            P, Pp, _, dist = ev.eval_array(zk)
            snap = np.maximum(tol, np.abs(dz[idx]) * pixel_radius)
            hit = dist <= snap
            codes[idx[hit]] = PREPOLE
            levels[idx[hit]] = k
            active[idx[hit]] = False
            keep = ~hit
            idx, zk, P, Pp = idx[keep], zk[keep], P[keep], Pp[keep]
            fail = ~(np.abs(zk) > growth_threshold(k, R_base))
            codes[idx[fail]] = BOUNDED
            levels[idx[fail]] = k
            active[idx[fail]] = False
            idx, zk, P, Pp = idx[~fail], zk[~fail], P[~fail], Pp[~fail]
            if k < depth:
                bb = b[idx]
                dz[idx] = P + bb * Pp * dz[idx]
                z[idx] = bb * P
                nonfinite = ~np.isfinite(z[idx])
                codes[idx[nonfinite]] = UNRESOLVED
                levels[idx[nonfinite]] = k + 1
                active[idx[nonfinite]] = False
    return codes.reshape(shape), levels.reshape(shape)


def phase_of(z) -> float:
    return cmath.phase(complex(z))
