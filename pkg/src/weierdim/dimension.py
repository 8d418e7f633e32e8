"""Hausdorff dimension lower bounds for nested families.

For a nested family with level densities Delta_n and diameters d_n in
ambient dimension d, the lower bound is

    dim_H >= d - lim_n  sum_{j<=n} |log Delta_j| / |log d_n|.

Families are described through the logarithms of their sequences, because the
diameters of the cylinder families underflow double precision after a few
dozen levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidArgumentError, InvalidConstantsError, InvalidSpecError

LOG2 = math.log(2)


@dataclass(frozen=True)
class NestedFamilySpec:
    """Per-level data of a nested family, as natural logarithms.

    ``log_delta(n)`` must be <= 0 (Delta_n in (0, 1]) and ``log_diam(n)`` < 0
    (d_n in (0, 1)).
    """

    ambient_dim: int
    log_delta: Callable[[int], float]
    log_diam: Callable[[int], float]
    description: str = ""

    @classmethod
    def from_sequences(cls, ambient_dim, delta_seq, diam_seq, description=""):
        return cls(
            ambient_dim,
            lambda n: math.log(delta_seq(n)),
            lambda n: math.log(diam_seq(n)),
            description,
        )

    def delta_seq(self, n: int) -> float:
        return math.exp(self.log_delta(n))

    def diam_seq(self, n: int) -> float:
        return math.exp(self.log_diam(n))


@dataclass
class DimensionBound:
    partials: list  # (n, value)
    extrapolated: float
    liminf: float
    slope: float  # coefficient of 1/n in the fitted window
    formula_value: float | None = None

    def to_json(self) -> dict:
        return {
            "partials": [[n, v] for n, v in self.partials],
            "extrapolated": self.extrapolated,
            "liminf": self.liminf,
            "slope": self.slope,
            "formula_value": self.formula_value,
        }


def mcmullen_partials(spec: NestedFamilySpec, n_max: int) -> list[tuple[int, float]]:
    if n_max < 1:
        raise InvalidArgumentError("n_max must be positive")
    out = []
    logs = []
    for n in range(1, n_max + 1):
        ld = spec.log_delta(n)
        lr = spec.log_diam(n)
        if not (math.isfinite(ld) and ld <= 0):
            raise InvalidSpecError(f"Delta_{n} = exp({ld}) is outside (0, 1]")
        if not (math.isfinite(lr) and lr < 0):
            raise InvalidSpecError(f"d_{n} = exp({lr}) is outside (0, 1)")
        logs.append(-ld)
        out.append((n, spec.ambient_dim - math.fsum(logs) / -lr))
    return out


def mcmullen_bound(spec: NestedFamilySpec, n_max: int, formula_value: float | None = None) -> DimensionBound:
    """Partial bounds for n <= n_max and their limit, by an affine fit in 1/n over
    the last third of the partials."""
    if n_max < 3:
        raise InvalidArgumentError("n_max must be at least 3")
    partials = mcmullen_partials(spec, n_max)
    window = partials[-max(2, n_max // 3):]
    x = np.array([1.0 / n for n, _ in window])
    y = np.array([v for _, v in window])
    if np.ptp(y) == 0:
        slope, intercept = 0.0, float(y[0])
    else:
        slope, intercept = np.polyfit(x, y, 1)
    return DimensionBound(
        partials=partials,
        extrapolated=float(intercept),
        liminf=float(y.min()),
        slope=float(slope),
        formula_value=formula_value,
    )


def ternary_cantor_spec() -> NestedFamilySpec:
    return NestedFamilySpec(1, lambda n: math.log(2 / 3), lambda n: -n * math.log(3), "middle-thirds Cantor set")


def cantor_dust_spec() -> NestedFamilySpec:
    return NestedFamilySpec(
        2, lambda n: math.log(4 / 9), lambda n: 0.5 * LOG2 - n * math.log(3), "four-corner planar Cantor dust"
    )


def analytic_bound(a: float) -> float:
    """4/3 - 6 log 2 / log a."""
    a = float(a)
    if not a > 1:
        raise InvalidArgumentError("a must exceed 1")
    return 4 / 3 - 6 * LOG2 / math.log(a)


def cylinder_family_spec(consts, strict: bool = True) -> NestedFamilySpec:
    """Closed-form densities and diameters of the cylinder family built from ``consts``.

    Delta_1 = M'/R_2, Delta_n = M / (2^{9n} R_{n+1}); d_1 = 2r and
    d_n = 4 eps (1+r) / ((C2/C1^{3/2})^{n-1} a^{3n(n-1)/4} R1^{(3n-1)/2}).
    """
    if strict and not consts.a > consts.a0:
        raise InvalidConstantsError(f"a = {consts.a} must exceed a0 = {consts.a0}")
    la, lR1 = math.log(consts.a), math.log(consts.R1)
    lk = math.log(consts.C2 / consts.C1**1.5)
    lM, lMp = math.log(consts.M), math.log(consts.M_prime)
    l4 = math.log(4 * consts.eps * (1 + consts.r))

    def log_delta(n):
        if n == 1:
            return lMp - (la + lR1)
        return lM - 9 * n * LOG2 - (n * la + lR1)

    def log_diam(n):
        if n == 1:
            return math.log(2 * consts.r)
        return l4 - (n - 1) * lk - 0.75 * n * (n - 1) * la - (3 * n - 1) / 2 * lR1

    return NestedFamilySpec(2, log_delta, log_diam, f"cylinder family, a = {consts.a:.6g}")


@dataclass
class ConsistencyReport:
    a: float
    n_max: int
    extrapolated: float
    analytic: float
    gap: float
    raw_gap: float  # partial(n_max) - analytic
    tolerance: float
    passed: bool
    partials: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "a": self.a,
            "n_max": self.n_max,
            "partials": [[n, v] for n, v in self.partials],
            "extrapolated": self.extrapolated,
            "analytic": self.analytic,
            "gap": self.gap,
            "raw_gap": self.raw_gap,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


def consistency_check(consts, n_max: int = 2000, tolerance: float | None = None) -> ConsistencyReport:
    """Compare the extrapolated bound of the closed-form family with 4/3 - 6 log2/log a.

    The default tolerance is ten times the leading 1/n correction at n_max,
    estimated from the fitted slope, and never below 1e-12.
    """
    bound = mcmullen_bound(cylinder_family_spec(consts), n_max)
    target = analytic_bound(consts.a)
    gap = abs(bound.extrapolated - target)
    if tolerance is None:
        tolerance = max(10 * abs(bound.slope) / n_max, 1e-12)
    return ConsistencyReport(
        a=consts.a,
        n_max=n_max,
        extrapolated=bound.extrapolated,
        analytic=target,
        gap=gap,
        raw_gap=bound.partials[-1][1] - target,
        tolerance=tolerance,
        passed=gap < tolerance,
        partials=bound.partials,
    )


def box_count_dimension(points, scale_range: tuple[float, float], n_scales: int = 12) -> float:
    """Least-squares slope of log N(delta) against log(1/delta).

    N(delta) counts the grid boxes of side delta that contain a point; the scales
    are geometrically spaced across ``scale_range``.
    """
    pts = np.asarray(points)
    if np.iscomplexobj(pts):
        pts = np.column_stack([pts.real, pts.imag])
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if pts.shape[0] == 1 and pts.shape[1] != 2:
        pts = pts.T
    if len(pts) < 1000:
        raise InvalidArgumentError("at least 1000 points are required")
    lo, hi = map(float, scale_range)
    if not (0 < lo < hi) or n_scales < 2:
        raise InvalidArgumentError("degenerate scale range")
    deltas = np.geomspace(lo, hi, n_scales)
    origin = pts.min(axis=0)
    counts = [len(np.unique(np.floor((pts - origin) / d).astype(np.int64), axis=0)) for d in deltas]
    slope, _ = np.polyfit(np.log(1 / deltas), np.log(counts), 1)
    return float(slope)


def cantor_points(level: int = 14, count: int = 10_000, seed: int = 0) -> np.ndarray:
    """Random points of the middle-thirds Cantor set from random ternary digits in {0, 2}."""
    rng = np.random.default_rng(seed)
    digits = 2 * rng.integers(0, 2, size=(count, level))
    return digits @ (3.0 ** -np.arange(1, level + 1))
