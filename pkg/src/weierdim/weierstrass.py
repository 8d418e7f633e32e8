"""Weierstrass elliptic function and its derivative.

Evaluation uses the Fourier expansion of the function in the variable
u = z/lambda1, after reducing u to the centred period cell,

    wp(z)  = (pi/lambda1)^2 [csc^2(pi u) - 1/3 - 8 sum c_n (cos 2 pi n u - 1)]
    wp'(z) = (pi/lambda1)^3 [-2 csc^2(pi u) cot(pi u) + 16 sum n c_n sin 2 pi n u]

with c_n = n q^n / (1 - q^n) and q = exp(2 pi i tau).  On the centred cell the
terms decay like exp(-pi n Im tau), about 0.066^n for a hexagonal lattice, so a
handful of terms reach double precision and the truncation error has a simple
geometric bound.  The same formulas written in pole-local form give the
factors G and H without cancellation.

Float64 inputs go through vectorised numpy code.  An evaluator created with
``dps`` also accepts gmpy2 ``mpc`` numbers.  gmpy2 precision is thread-local,
so high-precision work happens inside ``with ev.precision():``; the evaluator's
own methods enter that context themselves.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import gmpy2
import mpmath
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import (
    ConstantsNotFoundError,
    InvalidArgumentError,
    InvalidLatticeError,
    NearPoleError,
    WrongRegimeError,
)
MPC = type(mpc(0))
MPFR = type(mpfr(0))

from .lattice import Lattice, LatticeInvariants, _tail_sum, eisenstein_invariants, eisenstein_invariants_mp


def _terms_needed(x: float, qabs: float, tol: float) -> int:
    """Smallest N whose series tail is below ``tol`` (relative to the leading term)."""
    if x >= 0.5:
        raise InvalidLatticeError("lattice too elongated for the Fourier expansion; pass a reduced basis")
    n = 1
    while 16 * (n + 1) ** 2 * x ** (n + 1) / ((1 - x) ** 3 * (1 - qabs)) > tol:
        n += 1
    return n


class EllipticEvaluator:
    """Configured evaluator of wp and wp' for one lattice.

    Parameters
    ----------
    lattice : Lattice
    target_tolerance : float
        Relative accuracy of the float path.
    pole_exclusion_radius : float, optional
        Public evaluation refuses points closer than this to the lattice.
        Defaults to 1e-6 |lambda1|.
    dps : int, optional
        Decimal precision of the arbitrary-precision path.  Without it only
        float64 evaluation is available.
    prepole_tolerance : float, optional
        Snap radius used by the dynamics layer to declare a pole hit.
    """

    def __init__(
        self,
        lattice: Lattice,
        target_tolerance: float = 1e-14,
        pole_exclusion_radius: float | None = None,
        dps: int | None = None,
        prepole_tolerance: float | None = None,
    ):
        self.lattice = lattice
        self.target_tolerance = float(target_tolerance)
        scale = abs(lattice.lambda1)
        self.pole_exclusion_radius = 1e-6 * scale if pole_exclusion_radius is None else float(pole_exclusion_radius)
        self.laurent_radius = lattice.min_generator / 3
        l1 = lattice.lambda1
        l2 = lattice.lambda2 if lattice.orientation > 0 else -lattice.lambda2
        self._l1 = l1
        self._l2 = l2
        self._tau = l2 / l1
        q = cmath.exp(2j * math.pi * self._tau)
        x = math.exp(-math.pi * self._tau.imag)
        self.truncation_radius = _terms_needed(x, abs(q), self.target_tolerance * 1e-2)
        n = np.arange(1, self.truncation_radius + 1)
        qn = q**n
        self._cn = n * qn / (1 - qn)
        self._ncn = n * self._cn
        self._n = n
        self.invariants: LatticeInvariants = eisenstein_invariants(lattice)
        self.dps = dps
        self.prepole_tolerance = 1e-8 * scale if prepole_tolerance is None else float(prepole_tolerance)
        self.ctx = None
        if dps is not None:
            self._init_mp(int(dps), x, abs(q))

    # ------------------------------------------------------------------ setup
    def _init_mp(self, dps: int, x: float, qabs: float):
        self.prec = int(math.ceil(dps * math.log2(10))) + 16
        self.ctx = gmpy2.context(precision=self.prec)
        with self.precision():
            l1, l2 = self.lattice.hp_generators()
            if self.lattice.orientation < 0:
                l2 = -l2
            self.mp_l1, self.mp_l2 = l1, l2
            tau = l2 / l1
            self.mp_tau = tau
            self.mp_pi = gmpy2.const_pi()
            self._mp_2pii = 2 * self.mp_pi * mpc(0, 1)
            q = gmpy2.exp(self._mp_2pii * tau)
            nterms = _terms_needed(x, qabs, 10.0 ** (-dps - 5))
            self.mp_terms = nterms
            cn = []
            qn = mpc(1)
            for k in range(1, nterms + 1):
                qn *= q
                cn.append(k * qn / (1 - qn))
            self._mp_cn = cn
            self._mp_ncn = [k * c for k, c in enumerate(cn, start=1)]
            self.mp_g2, self.mp_g3 = self._mp_invariants(dps)
            # genuine escaping orbits pass within about sqrt(C1/R_n) of poles, far
            # closer than 1e-8 at depth, so the mp snap radius shrinks with precision
            self.mp_prepole_tolerance = mpfr(min(self.prepole_tolerance, 10.0 ** (-dps / 2) * abs(self.lattice.lambda1)))

    def _mp_invariants(self, dps):
        ctx = mpmath.MPContext()
        ctx.dps = dps + 10
        g2, g3 = eisenstein_invariants_mp(*self.lattice.mp_generators(ctx), ctx)
        conv = lambda v: mpc(mpfr(ctx.nstr(v.real, dps + 8)), mpfr(ctx.nstr(v.imag, dps + 8)))
        return conv(g2), conv(g3)

    def precision(self):
        """Context manager that sets this evaluator's working precision (thread-local)."""
        if self.ctx is None:
            raise InvalidArgumentError("this evaluator has no arbitrary-precision context (dps is None)")
        return gmpy2.context(self.ctx)

    def snap_radius(self, z):
        """Prepole snap radius appropriate to the precision of ``z``."""
        return self.mp_prepole_tolerance if self.is_mp(z) else self.prepole_tolerance

    def with_dps(self, dps: int) -> "EllipticEvaluator":
        return EllipticEvaluator(
            self.lattice,
            target_tolerance=self.target_tolerance,
            pole_exclusion_radius=self.pole_exclusion_radius,
            dps=dps,
            prepole_tolerance=self.prepole_tolerance,
        )

    @staticmethod
    def is_mp(z) -> bool:
        return isinstance(z, (MPC, MPFR))

    def to_mp(self, z):
        """Convert a number (complex, mpmath value, (re, im) strings) to this precision."""
        with self.precision():
            if isinstance(z, (MPC, MPFR)):
                return mpc(z)
            if isinstance(z, (tuple, list)):
                return mpc(mpfr(str(z[0])), mpfr(str(z[1])))
            if isinstance(z, (complex, float, int, np.number)):
                return mpc(complex(z))
            if isinstance(z, str):
                return mpc(complex(z)) if "j" in z else mpc(mpfr(z))
            # mpmath numbers
            return mpc(mpfr(mpmath.nstr(mpmath.re(z), 200)), mpfr(mpmath.nstr(mpmath.im(z), 200)))

    # ----------------------------------------------------------- float path
    def _reduce(self, z):
        u = np.asarray(z, dtype=np.complex128) / self._l1
        t2 = np.rint(u.imag / self._tau.imag)
        u = u - t2 * self._tau
        t1 = np.rint(u.real)
        u = u - t1
        return u, t1, t2

    def _series(self, u):
        """Regular parts S(u), T(u) of the normalised wp and wp'."""
        w = np.exp(2j * np.pi * u)
        wi = 1.0 / w
        S = np.zeros_like(u)
        T = np.zeros_like(u)
        wn = np.ones_like(u)
        win = np.ones_like(u)
        for c, nc in zip(self._cn, self._ncn):
            wn = wn * w
            win = win * wi
            S += c * ((wn + win) * 0.5 - 1.0)
            T += nc * (wn - win) * (-0.5j)
        return -1.0 / 3.0 - 8.0 * S, 16.0 * T

    def _core(self, z):
        """wp, wp', G, H and nearest pole for float input (array)."""
        u, t1, t2 = self._reduce(z)
        S, T = self._series(u)
        pu = np.pi * u
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.sin(pu)
            c = np.cos(pu)
            ratio = np.where(pu == 0, 1.0, pu / s)
            G = ratio**2 + pu**2 * S
            H = -2.0 * ratio**2 * np.where(pu == 0, 1.0, pu * c / s) + pu**3 * T
            dz = self._l1 * u
            P = G / dz**2
            Pp = H / dz**3
        pole = t1 * self._l1 + t2 * self._l2
        return P, Pp, G, H, pole, np.abs(dz)

    def eval_array(self, z):
        """Vectorised (wp, wp', nearest pole, distance to it); no exclusion check."""
        P, Pp, _, _, pole, dist = self._core(np.asarray(z, dtype=np.complex128))
        return P, Pp, pole, dist

    # -------------------------------------------------------------- mp path
    def _core_mp(self, z):
        with self.precision():
            u = z / self.mp_l1
            t2 = gmpy2.rint(u.imag / self.mp_tau.imag)
            u = u - t2 * self.mp_tau
            t1 = gmpy2.rint(u.real)
            u = u - t1
            w = gmpy2.exp(self._mp_2pii * u)
            wi = 1 / w
            wn = mpc(1)
            win = mpc(1)
            S = mpc(0)
            T = mpc(0)
            for c, nc in zip(self._mp_cn, self._mp_ncn):
                wn *= w
                win *= wi
                S += c * ((wn + win) / 2 - 1)
                T += nc * (wn - win)
            S = -mpfr(1) / 3 - 8 * S
            T = T * mpc(0, -8)
            pu = self.mp_pi * u
            pole = t1 * self.mp_l1 + t2 * self.mp_l2
            if pu == 0:
                inf = mpfr("inf")
                return mpc(inf, 0), mpc(inf, 0), mpc(1), mpc(-2), pole, mpfr(0)
            s = gmpy2.sin(pu)
            ratio = pu / s
            G = ratio**2 + pu**2 * S
            H = -2 * ratio**2 * (pu * gmpy2.cos(pu) / s) + pu**3 * T
            dz = self.mp_l1 * u
            return G / dz**2, H / dz**3, G, H, pole, abs(dz)

    def eval_mp(self, z):
        """(wp, wp', nearest pole, distance) at an mp point; no exclusion check."""
        P, Pp, _, _, pole, dist = self._core_mp(self.to_mp(z) if not isinstance(z, MPC) else z)
        return P, Pp, pole, dist

    # ------------------------------------------------------------ dispatch
    def eval(self, z):
        if self.is_mp(z):
            return self.eval_mp(z)
        P, Pp, pole, dist = self.eval_array(np.asarray([z], dtype=np.complex128))
        return complex(P[0]), complex(Pp[0]), complex(pole[0]), float(dist[0])

    def laurent(self, z):
        """(G, H, pole) with no regime check."""
        if self.is_mp(z):
            _, _, G, H, pole, _ = self._core_mp(self.to_mp(z))
            return G, H, pole
        _, _, G, H, pole, _ = self._core(np.asarray(z, dtype=np.complex128))
        if np.ndim(z) == 0:
            return complex(G), complex(H), complex(pole)
        return G, H, pole

    @property
    def g2(self):
        return self.invariants.g2

    @property
    def g3(self):
        return self.invariants.g3


def _checked(ev: EllipticEvaluator, z):
    P, Pp, pole, dist = ev.eval(z)
    if dist < ev.pole_exclusion_radius:
        raise NearPoleError(z, pole, dist)
    return P, Pp


def wp(ev: EllipticEvaluator, z):
    """Weierstrass function at z (float or mp, matching the input)."""
    if isinstance(z, np.ndarray):
        P, _, pole, dist = ev.eval_array(z)
        bad = dist < ev.pole_exclusion_radius
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NearPoleError(z.flat[i], pole.flat[i], dist.flat[i])
        return P
    return _checked(ev, z)[0]


def wp_prime(ev: EllipticEvaluator, z):
    if isinstance(z, np.ndarray):
        _, Pp, pole, dist = ev.eval_array(z)
        bad = dist < ev.pole_exclusion_radius
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise NearPoleError(z.flat[i], pole.flat[i], dist.flat[i])
        return Pp
    return _checked(ev, z)[1]


def critical_points(ev: EllipticEvaluator, mp: bool = False):
    """Half periods c1 = lambda1/2, c2 = lambda2/2, c3 = (lambda1 + lambda2)/2."""
    if mp:
        with ev.precision():
            l1, l2 = ev.mp_l1, ev.mp_l2
            if ev.lattice.orientation < 0:
                l2 = -l2
            c1, c2 = l1 / 2, l2 / 2
            return c1, c2, c1 + c2
    c1, c2 = ev.lattice.lambda1 / 2, ev.lattice.lambda2 / 2
    return c1, c2, c1 + c2


def critical_values(ev: EllipticEvaluator, mp: bool = False):
    return tuple(wp(ev, c) for c in critical_points(ev, mp=mp))


def laurent_factors(ev: EllipticEvaluator, z):
    """G = wp(z)(z-b)^2 and H = wp'(z)(z-b)^3 for the pole b nearest to z."""
    G, H, pole = ev.laurent(z)
    dist = abs(z - pole)
    if dist >= ev.laurent_radius:
        raise WrongRegimeError(f"{z} is {float(dist):.3g} from the nearest pole; Laurent factors need < {ev.laurent_radius:.3g}")
    if dist == 0:
        raise NearPoleError(z, pole, 0.0)
    return G, H, pole


def wp_direct(lat: Lattice, z: complex, truncation_radius: int = 200) -> tuple[complex, float]:
    """Defining lattice sum over max(|l|,|m|) <= N, with a bound on the omitted tail.

    Pairs w, -w are summed together; their contribution is at most
    11.6|z|^2/|w|^4 once |w| >= 2|z|.
    """
    N = int(truncation_radius)
    rng = np.arange(-N, N + 1, dtype=np.float64)
    total = 1.0 / z**2
    for m in range(-N, N + 1):
        w = rng * lat.lambda1 + m * lat.lambda2
        if m == 0:
            w = w[rng != 0]
        terms = 1.0 / (z - w) ** 2 - 1.0 / w**2
        total += complex(math.fsum(terms.real), math.fsum(terms.imag))
    R = (N + 1) * lat.area / max(abs(lat.lambda1), abs(lat.lambda2))
    if R < 2 * abs(z):
        return total, math.inf
    return total, 5.8 * abs(z) ** 2 * _tail_sum(lat, R, 4)


@dataclass(frozen=True)
class PoleLocalData:
    pole: complex
    eps0: float
    K1: float
    K2: float
    C1: float
    C2: float
    M1: float
    M2: float
    r: float
    grid_points: int = 0
    history: tuple = field(default=(), compare=False)


def _polar_grid(eps0: float, n_r: int, n_t: int):
    radii = eps0 * np.arange(1, n_r + 1) / n_r
    angles = 2 * np.pi * np.arange(n_t) / n_t
    return radii[None, :] * np.exp(1j * angles)[:, None]


def _sample_constants(ev: EllipticEvaluator, eps0: float, n_r: int, n_t: int):
    z = _polar_grid(eps0, n_r, n_t)
    G, H, _ = ev.laurent(z)
    aG, aH = np.abs(G), np.abs(H)
    K1 = max(aG.max(), 1.0 / aG.min(), 1.0)
    K2 = max(aH.max(), 1.0 / aH.min(), 1.0)
    # arg G tracked continuously outwards along each ray from arg G(b) = 0
    argG = np.unwrap(np.concatenate([np.zeros((n_t, 1)), np.angle(G)], axis=1), axis=1)
    return float(K1), float(K2), float(argG.min()), float(argG.max())


def estimate_pole_constants(ev: EllipticEvaluator, eps0: float, r: float, min_points: int = 10_000) -> PoleLocalData:
    """Sampled K1, K2, C1, C2, M1, M2 on B(pole, eps0) for beta in B(1, r).

    The grid is doubled until K1 and K2 change by less than 1%.  If the argument
    spread M2 - M1 reaches pi/4, eps0 and r are halved and the estimate repeated.
    """
    if not 0 < eps0 < min(1.0, abs(ev.lattice.lambda1) / 3):
        raise InvalidArgumentError("eps0 must lie in (0, min(1, |lambda1|/3))")
    if not 0 < r < 0.5:
        raise InvalidArgumentError("r must lie in (0, 1/2)")
    history = []
    for _ in range(40):
        n_r = n_t = max(8, int(math.ceil(math.sqrt(min_points))))
        prev = _sample_constants(ev, eps0, n_r, n_t)
        while True:
            n_r *= 2
            n_t *= 2
            cur = _sample_constants(ev, eps0, n_r, n_t)
            if abs(cur[0] - prev[0]) <= 0.01 * prev[0] and abs(cur[1] - prev[1]) <= 0.01 * prev[1]:
                break
            prev = cur
            if n_r > 4096:
                break
        K1, K2, amin, amax = cur
        spread = math.asin(r)
        M1, M2 = amin - spread, amax + spread
        history.append((eps0, r, K1, K2, M1, M2))
        if M2 - M1 < math.pi / 4:
            return PoleLocalData(
                pole=0j,
                eps0=eps0,
                K1=K1,
                K2=K2,
                C1=2 * K1,
                C2=2 * K2,
                M1=M1,
                M2=M2,
                r=r,
                grid_points=n_r * n_t,
                history=tuple(history),
            )
        eps0 /= 2
        r /= 2
    raise ConstantsNotFoundError("argument spread stayed above pi/4 after 40 halvings")
