"""Period lattices, their invariants and pole geometry.

A :class:`Lattice` is stored by two float generators.  Lattices built by
:func:`equianharmonic_lattice` and :func:`make_pole_critical_lattice` also
carry their generators as high-precision decimal strings, so that the
arbitrary-precision evaluator sees an exactly hexagonal lattice instead of
its float64 rounding.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import gmpy2
import mpmath
import numpy as np

from .errors import InvalidArgumentError, InvalidLatticeError

RHO = cmath.exp(2j * math.pi / 3)
HP_DIGITS = 220


@dataclass(frozen=True)
class Lattice:
    lambda1: complex
    lambda2: complex
    hp: tuple[str, str, str, str] | None = None

    def __post_init__(self):
        l1, l2 = complex(self.lambda1), complex(self.lambda2)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        if l1 == 0 or l2 == 0 or not (math.isfinite(abs(l1)) and math.isfinite(abs(l2))):
            raise InvalidLatticeError("lattice generators must be finite and nonzero")
        if abs((l2 / l1).imag) < 1e-12:
            raise InvalidLatticeError("generators are real-collinear; the lattice is degenerate")

    @property
    def orientation(self) -> int:
        return 1 if (self.lambda2 / self.lambda1).imag > 0 else -1

    @property
    def tau(self) -> complex:
        return self.lambda2 / self.lambda1

    @property
    def area(self) -> float:
        """Area of the fundamental parallelogram."""
        return abs((self.lambda1.conjugate() * self.lambda2).imag)

    @property
    def min_generator(self) -> float:
        return min(abs(self.lambda1), abs(self.lambda2))

    def point(self, l: int, m: int) -> complex:
        return l * self.lambda1 + m * self.lambda2

    def is_triangular(self, tol: float = 1e-6) -> bool:
        return abs(self.lambda2 - RHO * self.lambda1) < tol * abs(self.lambda1)

    def scaled(self, alpha: complex) -> "Lattice":
        return Lattice(alpha * self.lambda1, alpha * self.lambda2)

    def mp_generators(self, ctx) -> tuple:
        """Generators as ``ctx.mpc`` values, using the stored digits when present."""
        if self.hp is not None:
            a, b, c, d = self.hp
            return ctx.mpc(ctx.mpf(a), ctx.mpf(b)), ctx.mpc(ctx.mpf(c), ctx.mpf(d))
        return ctx.mpc(self.lambda1), ctx.mpc(self.lambda2)

    def hp_generators(self) -> tuple:
        """Generators as gmpy2 ``mpc`` values at the current gmpy2 precision."""
        if self.hp is not None:
            a, b, c, d = self.hp
            return gmpy2.mpc(gmpy2.mpfr(a), gmpy2.mpfr(b)), gmpy2.mpc(gmpy2.mpfr(c), gmpy2.mpfr(d))
        return gmpy2.mpc(self.lambda1), gmpy2.mpc(self.lambda2)

    def to_json(self) -> dict:
        out = {
            "lambda1": [self.lambda1.real, self.lambda1.imag],
            "lambda2": [self.lambda2.real, self.lambda2.imag],
        }
        if self.hp is not None:
            out["lambda1_hp"] = [self.hp[0], self.hp[1]]
            out["lambda2_hp"] = [self.hp[2], self.hp[3]]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Lattice":
        l1 = complex(*obj["lambda1"])
        l2 = complex(*obj["lambda2"])
        hp = None
        if "lambda1_hp" in obj and "lambda2_hp" in obj:
            hp = tuple(str(s) for s in (*obj["lambda1_hp"], *obj["lambda2_hp"]))
        return cls(l1, l2, hp)


class LatticePoint(NamedTuple):
    l: int
    m: int
    value: complex


@dataclass(frozen=True)
class LatticeInvariants:
    g2: complex
    g3: complex
    truncation_radius: int
    tail_bound: float
    tail_bound_g2: float = 0.0


def _hp_lattice(l1, l2, ctx) -> Lattice:
    """Build a lattice from mp generators, keeping their digits."""
    hp = tuple(ctx.nstr(x, HP_DIGITS - 10, strip_zeros=False) for x in (l1.real, l1.imag, l2.real, l2.imag))
    return Lattice(complex(l1), complex(l2), hp)


def _tail_sum(lat: Lattice, R: float, k: int) -> float:
    """Upper bound for sum of |w|^-k over lattice points with |w| >= R.

    Each point owns its translate of the centred fundamental cell, whose points
    lie within D/2 of it, so the sum is dominated by an integral over |x| >= R - D/2.
    """
    D = max(abs(lat.lambda1 + lat.lambda2), abs(lat.lambda1 - lat.lambda2))
    s0 = R - D
    if s0 <= 0:
        return math.inf
    return 2 * math.pi / lat.area * (s0 ** (2 - k) / (k - 2) + 0.5 * D * s0 ** (1 - k) / (k - 1))


def _inradius(lat: Lattice, N: int) -> float:
    # distance from 0 to the boundary of {max(|l|,|m|) <= N} is N*area/max|lambda|,
    # and every excluded point has max(|l|,|m|) >= N+1
    return (N + 1) * lat.area / max(abs(lat.lambda1), abs(lat.lambda2))


def invariants(lat: Lattice, truncation_radius: int = 200) -> LatticeInvariants:
    """Direct Eisenstein sums g2 = 60 sum w^-4 and g3 = 140 sum w^-6.

    The sums run over max(|l|, |m|) <= truncation_radius.  ``tail_bound`` bounds the
    omitted part of g3 and ``tail_bound_g2`` that of g2.
    """
    N = int(truncation_radius)
    if N < 10:
        raise InvalidArgumentError("truncation_radius must be at least 10")
    rng = np.arange(-N, N + 1, dtype=np.float64)
    s4 = 0j
    s6 = 0j
    for m in range(-N, N + 1):
        w = rng * lat.lambda1 + m * lat.lambda2
        if m == 0:
            w = w[rng != 0]
        w2 = 1.0 / (w * w)
        w4 = w2 * w2
        # math.fsum keeps the cancellation in symmetric lattices under control
        s4 += complex(math.fsum(w4.real), math.fsum(w4.imag))
        w6 = w4 * w2
        s6 += complex(math.fsum(w6.real), math.fsum(w6.imag))
    R = _inradius(lat, N)
    return LatticeInvariants(
        g2=60 * s4,
        g3=140 * s6,
        truncation_radius=N,
        tail_bound=140 * _tail_sum(lat, R, 6),
        tail_bound_g2=60 * _tail_sum(lat, R, 4),
    )


def _upper_tau(l1, l2):
    tau = l2 / l1
    return tau if tau.imag > 0 else -tau


def eisenstein_invariants_mp(l1, l2, ctx):
    """g2, g3 from the q-expansions of E4 and E6, evaluated in ``ctx``."""
    tau = _upper_tau(l1, l2)
    q = ctx.expj(2 * ctx.pi * tau)
    target = ctx.mpf(2) ** (-ctx.prec - 20)
    e4 = ctx.mpc(0)
    e6 = ctx.mpc(0)
    qn = ctx.mpc(1)
    n = 0
    while True:
        n += 1
        qn *= q
        divs = [d for d in range(1, n + 1) if n % d == 0]
        s3 = sum(d**3 for d in divs)
        s5 = sum(d**5 for d in divs)
        e4 += s3 * qn
        e6 += s5 * qn
        if abs(qn) * n**6 < target:
            break
    E4 = 1 + 240 * e4
    E6 = 1 - 504 * e6
    G4 = ctx.pi**4 / 45 * E4 / l1**4
    G6 = 2 * ctx.pi**6 / 945 * E6 / l1**6
    return 60 * G4, 140 * G6


def eisenstein_invariants(lat: Lattice) -> LatticeInvariants:
    """Invariants from the rapidly convergent q-series, rounded to float."""
    ctx = mpmath.MPContext()
    ctx.dps = 40
    l1, l2 = lat.mp_generators(ctx)
    g2, g3 = eisenstein_invariants_mp(l1, l2, ctx)
    return LatticeInvariants(complex(g2), complex(g3), truncation_radius=0, tail_bound=1e-30 * max(1.0, abs(complex(g3))))


@lru_cache(maxsize=None)
def _g3_unit_string() -> str:
    ctx = mpmath.MPContext()
    ctx.dps = HP_DIGITS
    _, g3 = eisenstein_invariants_mp(ctx.mpc(1), ctx.expjpi(ctx.mpf(2) / 3), ctx)
    return ctx.nstr(g3.real, HP_DIGITS - 10)


def g3_unit() -> float:
    """g3 of the unit hexagonal lattice [1, e^{2 pi i/3}]."""
    return float(_g3_unit_string())


def triangular_lattice(lambda1: complex = 1.0) -> Lattice:
    ctx = mpmath.MPContext()
    ctx.dps = HP_DIGITS
    l1 = ctx.mpc(lambda1)
    return _hp_lattice(l1, l1 * ctx.expjpi(ctx.mpf(2) / 3), ctx)


def equianharmonic_lattice(g3_target: float) -> Lattice:
    """Hexagonal lattice alpha*[1, rho] with g2 = 0 and g3 = g3_target."""
    if not g3_target > 0:
        raise InvalidArgumentError("g3_target must be positive")
    ctx = mpmath.MPContext()
    ctx.dps = HP_DIGITS
    unit = ctx.mpf(_g3_unit_string())
    target = ctx.mpf(g3_target)
    ratio = unit / target
    alpha = ctx.mpf(1) if abs(ratio - 1) < 1e-15 else ctx.root(ratio, 6)
    return _hp_lattice(ctx.mpc(alpha), alpha * ctx.expjpi(ctx.mpf(2) / 3), ctx)


def make_pole_critical_lattice(m: int) -> Lattice:
    """Hexagonal lattice Gamma whose half-period gamma1/2 is mapped by its own
    Weierstrass function to the lattice point m*gamma1.

    The generator pair of Omega (g2 = 0, g3 = 4) is taken as
    omega1 = alpha*e^{i pi/3}, omega2 = rho*omega1, for which the critical value at
    omega1/2 is e^{4 pi i/3}.  Then gamma1 is the principal cube root of
    e^{4 pi i/3} omega1^2 / m and gamma2 = gamma1 * omega2 / omega1.
    """
    if isinstance(m, bool) or int(m) != m or m >= 0 or int(m) % 2 == 0:
        raise InvalidArgumentError(f"m must be a negative odd integer, got {m!r}")
    m = int(m)
    ctx = mpmath.MPContext()
    ctx.dps = HP_DIGITS
    omega = equianharmonic_lattice(4.0)
    alpha = ctx.mpf(omega.hp[0])
    rho = ctx.expjpi(ctx.mpf(2) / 3)
    w1 = alpha * ctx.expjpi(ctx.mpf(1) / 3)
    w2 = rho * w1
    c = ctx.expjpi(ctx.mpf(4) / 3) * w1**2 / m
    # principal branch: argument in (-pi/3, pi/3]
    theta = ctx.arg(c)
    if theta <= -ctx.pi + ctx.mpf(10) ** (-HP_DIGITS // 2):
        theta = ctx.pi  # a negative real with a signed-zero imaginary part
    g1 = ctx.root(abs(c), 3) * ctx.expj(theta / 3)
    return _hp_lattice(g1, g1 * w2 / w1, ctx)


def _coords(lat: Lattice, z):
    """Real coordinates (t1, t2) with z = t1*lambda1 + t2*lambda2."""
    z = np.asarray(z, dtype=np.complex128)
    det = (lat.lambda1.conjugate() * lat.lambda2).imag
    t1 = (z.conjugate() * lat.lambda2).imag / det
    t2 = (lat.lambda1.conjugate() * z).imag / det
    return t1, t2


def reduce_to_fundamental(z: complex, lat: Lattice) -> tuple[complex, int, int]:
    """Write z = z_red + l*lambda1 + m*lambda2 with z_red in the half-open cell."""
    t1, t2 = (float(t) for t in _coords(lat, z))
    l, m = _floor_snapped(t1), _floor_snapped(t2)
    z_red = z - lat.point(l, m)
    return z_red, l, m


def _floor_snapped(t: float) -> int:
    # coordinates within rounding error of an integer count as that integer, so
    # points on a cell edge land in the cell that contains that edge
    k = round(t)
    if abs(t - k) <= 8 * math.ulp(max(1.0, abs(t))):
        return int(k)
    return math.floor(t)


def nearest_lattice_point(lat: Lattice, z):
    """Nearest lattice point(s) to z; returns (l, m, b) arrays (or scalars)."""
    scalar = np.ndim(z) == 0
    z = np.atleast_1d(np.asarray(z, dtype=np.complex128))
    t1, t2 = _coords(lat, z)
    l0 = np.rint(t1)
    m0 = np.rint(t2)
    best_l, best_m = l0.copy(), m0.copy()
    best_d = np.full(z.shape, np.inf)
    for dl in (-1, 0, 1):
        for dm in (-1, 0, 1):
            b = (l0 + dl) * lat.lambda1 + (m0 + dm) * lat.lambda2
            d = np.abs(z - b)
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_l = np.where(better, l0 + dl, best_l)
            best_m = np.where(better, m0 + dm, best_m)
    b = best_l * lat.lambda1 + best_m * lat.lambda2
    if scalar:
        return int(best_l[0]), int(best_m[0]), complex(b[0])
    return best_l.astype(np.int64), best_m.astype(np.int64), b


def points_in_box(lat: Lattice, xmin: float, xmax: float, ymin: float, ymax: float) -> list[LatticePoint]:
    """All lattice points inside an axis-parallel rectangle."""
    corners = np.array([xmin + 1j * ymin, xmin + 1j * ymax, xmax + 1j * ymin, xmax + 1j * ymax])
    t1, t2 = _coords(lat, corners)
    out = []
    l1, l2 = lat.lambda1, lat.lambda2
    for m in range(int(math.floor(t2.min())) - 1, int(math.ceil(t2.max())) + 2):
        lo, hi = math.floor(t1.min()) - 1, math.ceil(t1.max()) + 1
        base = m * l2
        # narrow the l range using the real and imaginary constraints
        for comp_l, comp_b, cmin, cmax in ((l1.real, base.real, xmin, xmax), (l1.imag, base.imag, ymin, ymax)):
            if abs(comp_l) > 1e-300:
                a = (cmin - comp_b) / comp_l
                b = (cmax - comp_b) / comp_l
                lo = max(lo, math.floor(min(a, b)))
                hi = min(hi, math.ceil(max(a, b)))
        if hi < lo:
            continue
        ls = np.arange(lo, hi + 1)
        vals = ls * l1 + base
        keep = (vals.real >= xmin) & (vals.real <= xmax) & (vals.imag >= ymin) & (vals.imag <= ymax)
        out.extend(LatticePoint(int(l), m, complex(v)) for l, v in zip(ls[keep], vals[keep]))
    return out


def lattice_points_in_disc(lat: Lattice, radius: float) -> list[LatticePoint]:
    pts = points_in_box(lat, -radius, radius, -radius, radius)
    return [p for p in pts if abs(p.value) <= radius]


def _sort_key(lat: Lattice, value: complex):
    scale = abs(lat.lambda1)
    return (round(abs(value) / scale, 9), round(cmath.phase(value), 12))


def _ball_in_half_annulus(b, R, phi, eps):
    rot = b * cmath.exp(-1j * phi)
    return (abs(b) >= R + eps) and (abs(b) <= 2 * R - eps) and (rot.imag >= eps)


EXHAUSTIVE_LIMIT = 5_000_000


def count_poles_in_half_annulus(lat: Lattice, R: float, phi: float, eps: float) -> float:
    """Number of admissible target poles: exact when feasible, else the area estimate."""
    est = 1.5 * math.pi * (R - eps) ** 2 / lat.area
    if est > EXHAUSTIVE_LIMIT:
        inner, outer = R + eps, 2 * R - eps
        area = 0.5 * math.pi * (outer**2 - inner**2) - 2 * eps * (outer - inner)
        return area / lat.area
    return float(len(poles_in_half_annulus(lat, R, phi, eps, with_indices=True)))


def poles_in_half_annulus(lat: Lattice, R: float, phi: float, eps: float, with_indices: bool = False):
    """Lattice points b whose segment U(b, eps) sits inside the half-annulus
    {R < |z| < 2R, phi < arg z < phi + pi}.

    Containment is tested for the whole ball B(b, eps), which contains the
    segment.  The result is ordered by modulus, then argument.
    """
    if not R > 0:
        raise InvalidArgumentError("R must be positive")
    if not 0 < eps < abs(lat.lambda1) / 3:
        raise InvalidArgumentError("eps must lie in (0, |lambda1|/3)")
    est = 1.5 * math.pi * R**2 / lat.area
    if est > EXHAUSTIVE_LIMIT:
        raise InvalidArgumentError(
            f"about {est:.3g} candidate poles; use select_poles for a bounded selection"
        )
    pts = points_in_box(lat, -2 * R, 2 * R, -2 * R, 2 * R)
    keep = [p for p in pts if _ball_in_half_annulus(p.value, R, phi, eps)]
    keep.sort(key=lambda p: _sort_key(lat, p.value))
    return keep if with_indices else [p.value for p in keep]


def select_poles(lat: Lattice, R: float, phi: float, eps: float, count: int) -> list[LatticePoint]:
    """The ``count`` admissible poles of smallest modulus near the axis of the
    half-annulus (direction phi + pi/2).

    The angular window around the axis starts at a few lattice spacings and
    doubles until it holds ``count`` admissible poles; within the final window the
    selection is by (|b|, arg b).  Works for any R, including radii where the
    full pole set is astronomically large.
    """
    if count < 1:
        raise InvalidArgumentError("count must be positive")
    if not 0 < eps < abs(lat.lambda1) / 3:
        raise InvalidArgumentError("eps must lie in (0, |lambda1|/3)")
    axis = phi + math.pi / 2
    spacing = max(abs(lat.lambda1), abs(lat.lambda2))
    inner = R + eps
    outer = 2 * R - eps
    if outer <= inner:
        return []
    width = 4 * spacing * math.sqrt(count)
    while True:
        half_angle = min(math.pi / 2, width / inner)
        depth = min(outer - inner, width)
        # rotated frame: u along the axis, v across it
        rot = cmath.exp(1j * axis)
        u0, u1 = inner * math.cos(half_angle), inner + depth
        v = (inner + depth) * math.sin(half_angle)
        corners = [complex(u, s) * rot for u in (u0, u1) for s in (-v, v)]
        xs = [c.real for c in corners]
        ys = [c.imag for c in corners]
        cand = points_in_box(lat, min(xs), max(xs), min(ys), max(ys))
        good = []
        for p in cand:
            if abs(p.value) > inner + depth:
                continue
            ang = cmath.phase(p.value * rot.conjugate())
            if abs(ang) > half_angle or not _ball_in_half_annulus(p.value, R, phi, eps):
                continue
            good.append(p)
        if len(good) >= count or (half_angle >= math.pi / 2 and depth >= outer - inner):
            good.sort(key=lambda p: _sort_key(lat, p.value))
            return good[:count]
        width *= 2
