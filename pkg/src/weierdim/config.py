"""Run configuration shared by the command-line verbs."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields

from .errors import InvalidArgumentError
from .lattice import Lattice, make_pole_critical_lattice

FAMILIES = ("cylinder", "ternary", "dust")


@dataclass
class RunConfig:
    """Every knob of a run.  ``validate`` checks them before any computation.

    The lattice is either pole-critical (``m``) or given by explicit generators
    (``lattice`` as [re1, im1, re2, im2]); explicit generators win.
    """

    m: int = -3
    lattice: list | None = None
    r: float = 0.02
    eps0: float | None = None
    eps: float | None = None
    a: str | float = "auto"
    depth: int = 4
    branching: int = 2
    samples: int = 64
    center: list = None  # [re, im]
    radius: float = 0.05
    resolution: int = 512
    map_depth: int = 5
    beta: list | None = None  # [re, im] for the orbit verb
    orbit_steps: int = 5
    n_max: int = 2000
    family: str = "cylinder"
    seed: int = 0
    threads: int | None = None
    out_dir: str = "."
    require_pole_critical: bool = False

    def __post_init__(self):
        if self.center is None:
            self.center = [1.0, 0.0]

    # ------------------------------------------------------------ validation
    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise InvalidArgumentError(msg)

        if self.lattice is not None:
            need(len(self.lattice) == 4 and all(_finite(x) for x in self.lattice), "lattice needs four finite numbers")
        else:
            need(isinstance(self.m, int) and self.m != 0, "m must be a nonzero integer")
        need(_finite(self.r) and 0 < self.r < 0.25 - 1 / (2 * math.sin(math.pi / 8) + 4), "r must lie in (0, 1/4 - 1/(2 sin(pi/8) + 4))")
        need(self.eps0 is None or (_finite(self.eps0) and self.eps0 > 0), "eps0 must be positive")
        need(self.eps is None or (_finite(self.eps) and self.eps > 0), "eps must be positive")
        if isinstance(self.a, str):
            need(self.a == "auto", "a must be a number or 'auto'")
        else:
            need(_finite(self.a) and self.a > 1, "a must exceed 1")
        need(1 <= self.depth <= 6, "depth must lie in [1, 6]")
        need(self.branching >= 1, "branching must be positive")
        need(self.samples >= 16, "samples must be at least 16")
        need(len(self.center) == 2 and all(_finite(x) for x in self.center), "center needs two finite numbers")
        need(_finite(self.radius) and self.radius > 0, "radius must be positive")
        need(1 <= self.resolution <= 2**14, "resolution must lie in [1, 16384]")
        need(self.map_depth >= 1, "map_depth must be positive")
        need(self.beta is None or (len(self.beta) == 2 and all(_finite(x) for x in self.beta)), "beta needs two finite numbers")
        need(self.orbit_steps >= 1, "orbit_steps must be positive")
        need(self.n_max >= 3, "n_max must be at least 3")
        need(self.family in FAMILIES, f"family must be one of {FAMILIES}")
        need(self.threads is None or self.threads >= 1, "threads must be positive")
        return self

    # --------------------------------------------------------- serialization
    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**obj)
        if isinstance(cfg.a, str) and cfg.a != "auto":
            try:
                cfg.a = float(cfg.a)
            except ValueError:
                raise InvalidArgumentError("a must be a number or 'auto'") from None
        return cfg

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from None
        return cls.from_json(obj)

    # ------------------------------------------------------------ helpers
    def make_lattice(self) -> Lattice:
        if self.lattice is not None:
            re1, im1, re2, im2 = map(float, self.lattice)
            return Lattice(complex(re1, im1), complex(re2, im2))
        return make_pole_critical_lattice(self.m)

    @property
    def center_complex(self) -> complex:
        return complex(float(self.center[0]), float(self.center[1]))


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)
