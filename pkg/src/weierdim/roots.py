"""Root finding for holomorphic functions: damped Newton with an argument-principle fallback.

The routines only use ``+ - * /`` and ``abs`` on their values, so they work for
Python complex numbers and gmpy2 ``mpc`` alike.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable

from .errors import RootNotFoundError


@dataclass
class NewtonResult:
    root: object
    residual: object
    iterations: int
    converged: bool


def damped_newton(
    f_df: Callable,
    x0,
    tol_f: float,
    tol_x: float = 0.0,
    max_iter: int = 60,
    inside: Callable | None = None,
) -> NewtonResult:
    """Newton's method with step halving.

    ``f_df(x)`` returns ``(f(x), f'(x))``.  A step is halved (up to 40 times)
    until it reduces |f|.  Iteration stops once |f| <= tol_f or the step is
    shorter than tol_x.  When ``inside`` is given and an iterate leaves the
    admissible region, the run stops unconverged.
    """
    x = x0
    fx, dfx = f_df(x)
    for it in range(max_iter + 1):
        if abs(fx) <= tol_f:
            return NewtonResult(x, abs(fx), it, True)
        if it == max_iter or dfx == 0:
            break
        step = fx / dfx
        t = 1.0
        for _ in range(40):
            xn = x - step * t
            fn, dfn = f_df(xn)
            if abs(fn) < abs(fx):
                break
            t *= 0.5
        else:
            break
        x, fx, dfx = xn, fn, dfn
        if inside is not None and not inside(x):
            return NewtonResult(x, abs(fx), it + 1, False)
        if abs(step) * t <= tol_x:
            return NewtonResult(x, abs(fx), it + 1, abs(fx) <= tol_f)
    return NewtonResult(x, abs(fx), max_iter, abs(fx) <= tol_f)


def winding_number(f: Callable, contour: list[complex], max_depth: int = 12) -> int:
    """Winding number of f around 0 along a closed polygonal contour.

    Each edge is subdivided until the argument of f changes by less than pi/4
    between consecutive points.
    """
    total = 0.0
    n = len(contour)
    vals = [complex(f(z)) for z in contour]
    for i in range(n):
        a, b = contour[i], contour[(i + 1) % n]
        fa, fb = vals[i], vals[(i + 1) % n]
        total += _arg_change(f, a, b, fa, fb, max_depth)
    return int(round(total / (2 * math.pi)))


def _arg_change(f, a, b, fa, fb, depth):
    if fa == 0 or fb == 0:
        raise RootNotFoundError("function vanishes on the contour")
    d = cmath.phase(fb / fa)
    if abs(d) < math.pi / 4 or depth == 0:
        return d
    m = (a + b) / 2
    fm = complex(f(m))
    return _arg_change(f, a, m, fa, fm, depth - 1) + _arg_change(f, m, b, fm, fb, depth - 1)


def _box(center: complex, half: float, per_side: int = 8) -> list[complex]:
    corners = [center + half * c for c in (-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j)]
    pts = []
    for i in range(4):
        a, b = corners[i], corners[(i + 1) % 4]
        pts.extend(a + (b - a) * k / per_side for k in range(per_side))
    return pts


def subdivide_roots(f: Callable, center: complex, half: float, min_half: float, max_boxes: int = 4096) -> list[complex]:
    """Centres of small boxes that contain zeros of f, by recursive quartering.

    Boxes with winding number zero are discarded.  Returns the centres of boxes
    of half-width below ``min_half`` that still enclose a zero, ordered by
    position for determinism.
    """
    found = []
    stack = [(center, half)]
    visited = 0
    while stack:
        c, h = stack.pop()
        visited += 1
        if visited > max_boxes:
            raise RootNotFoundError("subdivision budget exhausted")
        try:
            w = winding_number(f, _box(c, h))
        except RootNotFoundError:
            # a zero on the edge: nudge the box
            w = winding_number(f, _box(c + 1e-3 * h * (1 + 1j), h))
        if w == 0:
            continue
        if h < min_half:
            found.append(c)
            continue
        q = h / 2
        for s in (-1 - 1j, 1 - 1j, 1 + 1j, -1 + 1j):
            stack.append((c + q * s, q))
    found.sort(key=lambda z: (z.real, z.imag))
    return found
