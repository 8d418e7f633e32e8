"""Escape-time rasters of the parameter plane.

Each pixel is one parameter beta, classified by iterating the first critical
orbit in double precision.  Gray values in the output graymap:

    0    bounded: the growth certificate failed at some step
    64   unresolved: the orbit overflowed or hit a non-finite value early
    128  prepole: an iterate came within snapping distance of a pole
    255  escaping: the certificate held for every step

Rows are split into fixed blocks that are classified independently, so the
raster does not depend on how many worker threads process the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cantor import thread_count
from .dynamics import BOUNDED, ESCAPING, PREPOLE, UNRESOLVED, classify_array
from .errors import InvalidArgumentError
from .weierstrass import EllipticEvaluator, critical_points

GRAY = {BOUNDED: 0, UNRESOLVED: 64, PREPOLE: 128, ESCAPING: 255}
CLASS_NAMES = {BOUNDED: "bounded", UNRESOLVED: "unresolved", PREPOLE: "prepole", ESCAPING: "escaping"}
MAX_RESOLUTION = 2**14
BLOCK_ROWS = 16


@dataclass
class EscapeMap:
    center: complex
    radius: float
    resolution: int
    depth: int
    codes: np.ndarray  # (rows, cols), row 0 at the top of the window
    levels: np.ndarray

    def pixel_to_beta(self, row, col):
        return pixel_grid(self.center, self.radius, self.resolution)[row, col]

    def counts(self) -> dict[str, int]:
        return {CLASS_NAMES[c]: int(np.count_nonzero(self.codes == c)) for c in (BOUNDED, UNRESOLVED, PREPOLE, ESCAPING)}

    @property
    def failure_rate(self) -> float:
        return float(np.count_nonzero(self.codes == UNRESOLVED)) / self.codes.size

    def to_pgm(self) -> str:
        gray = np.vectorize(GRAY.get)(self.codes) if self.codes.size else self.codes
        lines = [
            "P2",
            "# escape map: 0 bounded, 64 unresolved, 128 prepole, 255 escaping",
            f"# center {self.center.real:.17g} {self.center.imag:.17g} radius {self.radius:.17g} depth {self.depth}",
            f"{self.resolution} {self.resolution}",
            "255",
        ]
        for row in gray:
            vals = [str(int(v)) for v in row]
            for i in range(0, len(vals), 17):
                lines.append(" ".join(vals[i : i + 17]))
        return "\n".join(lines) + "\n"

    def summary_csv(self, symmetry_agreement: float | None = None) -> str:
        lines = ["class,gray,count,fraction"]
        total = self.codes.size
        for c in (BOUNDED, UNRESOLVED, PREPOLE, ESCAPING):
            n = int(np.count_nonzero(self.codes == c))
            lines.append(f"{CLASS_NAMES[c]},{GRAY[c]},{n},{n / total:.17g}")
        if symmetry_agreement is not None:
            lines.append(f"symmetry_agreement,,,{symmetry_agreement:.17g}")
        return "\n".join(lines) + "\n"


def read_pgm(text: str) -> np.ndarray:
    tokens = [t for line in text.splitlines() if not line.startswith("#") for t in line.split()]
    if tokens[0] != "P2":
        raise ValueError("not a plain graymap")
    w, h = int(tokens[1]), int(tokens[2])
    return np.array([int(t) for t in tokens[4 : 4 + w * h]], dtype=np.int64).reshape(h, w)


def pixel_grid(center: complex, radius: float, resolution: int) -> np.ndarray:
    """Pixel-centre parameters of the square window of half-width ``radius``."""
    t = (np.arange(resolution) + 0.5) / resolution * 2 - 1
    x = center.real + radius * t
    y = center.imag - radius * t  # top row first
    return x[None, :] + 1j * y[:, None]


def escape_map(
    ev: EllipticEvaluator,
    center: complex,
    radius: float,
    resolution: int,
    depth: int,
    R_base: float,
    threads: int | None = None,
    start: complex | None = None,
) -> EscapeMap:
    if not 1 <= resolution <= MAX_RESOLUTION:
        raise InvalidArgumentError(f"resolution must lie in [1, {MAX_RESOLUTION}]")
    if not radius > 0:
        raise InvalidArgumentError("radius must be positive")
    if depth < 1:
        raise InvalidArgumentError("depth must be at least 1")
    center = complex(center)
    grid = pixel_grid(center, radius, resolution)
    pixel_radius = radius / resolution * np.sqrt(2)
    blocks = [(i, min(i + BLOCK_ROWS, resolution)) for i in range(0, resolution, BLOCK_ROWS)]

    def work(block):
        lo, hi = block
        return classify_array(ev, grid[lo:hi], depth, R_base, pixel_radius=pixel_radius, start=start)

    n = thread_count(threads)
    if n == 1:
        parts = [work(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            parts = list(pool.map(work, blocks))
    codes = np.concatenate([p[0] for p in parts], axis=0)
    levels = np.concatenate([p[1] for p in parts], axis=0)
    return EscapeMap(center, float(radius), resolution, depth, codes, levels)


def symmetry_agreement(ev: EllipticEvaluator, emap: EscapeMap, R_base: float, n_pixels: int = 1000, seed: int = 0) -> float:
    """Fraction of random pixels whose class from the second critical point matches the raster."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, emap.resolution, n_pixels)
    cols = rng.integers(0, emap.resolution, n_pixels)
    grid = pixel_grid(emap.center, emap.radius, emap.resolution)
    betas = grid[rows, cols]
    c2 = critical_points(ev)[1]
    codes, _ = classify_array(ev, betas, emap.depth, R_base, pixel_radius=emap.radius / emap.resolution * np.sqrt(2), start=c2)
    return float(np.mean(codes == emap.codes[rows, cols]))
