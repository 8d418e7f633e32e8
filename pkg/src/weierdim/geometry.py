"""Planar polygon measurements on sampled cylinder boundaries."""

from __future__ import annotations

import numpy as np
from shapely.geometry import Point, Polygon
from shapely.prepared import prep


def as_xy(points) -> np.ndarray:
    z = np.asarray([complex(p) for p in points], dtype=np.complex128)
    return np.column_stack([z.real, z.imag])


def shoelace_area(points) -> float:
    """Signed area (positive for counter-clockwise order)."""
    z = np.asarray(points, dtype=np.complex128)
    x, y = z.real, z.imag
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def diameter(points) -> float:
    z = np.asarray(points, dtype=np.complex128)
    return float(np.max(np.abs(z[:, None] - z[None, :])))


def polygon(points) -> Polygon:
    return Polygon(as_xy(points))


def is_simple(points) -> bool:
    poly = polygon(points)
    return bool(poly.is_valid and poly.exterior.is_simple)


def contains_all(outer, inner) -> tuple[int, int]:
    """How many of the ``inner`` points lie inside the ``outer`` polygon: (inside, total)."""
    prepared = prep(polygon(outer))
    pts = as_xy(inner)
    inside = sum(prepared.contains(Point(x, y)) for x, y in pts)
    return int(inside), len(pts)


def disjoint(a, b) -> bool:
    return bool(polygon(a).disjoint(polygon(b)))


def contains_point(poly_points, z: complex) -> bool:
    return bool(polygon(poly_points).contains(Point(z.real, z.imag)))
