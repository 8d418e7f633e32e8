"""Command-line interface.

Verbs::

    weierdim lattice info     generators, invariants, critical values, pole-critical check
    weierdim escape-map       P2 raster of the parameter plane plus class counts
    weierdim cantor build     cylinder tree JSON plus per-level statistics CSV
    weierdim dim bound        dimension lower bound and its consistency check
    weierdim orbit            one critical orbit as CSV
    weierdim verify all       the invariant suite

Exit codes: 0 success, 2 invalid configuration, 3 verification failure,
4 evaluator failure rate above 1%, 5 root finding exhausted, 6 consistency failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cantor import (
    build_family,
    choose_constants,
    family_stats,
    stats_csv,
)
from .config import FAMILIES, RunConfig
from .dimension import analytic_bound, cantor_dust_spec, consistency_check, mcmullen_bound, ternary_cantor_spec
from .dynamics import orbit
from .errors import (
    ConstructionInfeasibleError,
    InvalidArgumentError,
    InvalidConstantsError,
    InvalidLatticeError,
    RootNotFoundError,
)
from .escape_map import escape_map, symmetry_agreement
from .lattice import invariants, nearest_lattice_point
from .verify import check_ode, default_eps0, run_all
from .weierstrass import EllipticEvaluator, critical_points, critical_values, estimate_pole_constants

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3
EXIT_EVALUATOR = 4
EXIT_ROOT = 5
EXIT_CONSISTENCY = 6

POLE_CRITICAL_TOL = 1e-8
MAX_FAILURE_RATE = 0.01


class CommandFailure(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ------------------------------------------------------------------ arguments
def _pair(text: str) -> list[float]:
    parts = [float(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return parts


def _quad(text: str) -> list[float]:
    parts = [float(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated numbers")
    return parts


def _growth(text: str):
    return "auto" if text == "auto" else float(text)


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    g.add_argument("--m", type=int, help="pole-critical lattice with wp(gamma1/2) = m gamma1")
    g.add_argument("--lattice", type=_quad, help="explicit generators re1,im1,re2,im2")
    g.add_argument("--r", type=float)
    g.add_argument("--eps0", type=float)
    g.add_argument("--eps", type=float)
    g.add_argument("--a", type=_growth, help="growth factor, a number or 'auto' (= 2 a0)")
    g.add_argument("--seed", type=int)
    g.add_argument("--threads", type=int)
    g.add_argument("--out-dir", dest="out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weierdim", description="Escaping parameters of beta * wp and their dimension.")
    parser.add_argument("--version", action="version", version=f"weierdim {__version__}")
    verbs = parser.add_subparsers(dest="verb", required=True)

    lat = verbs.add_parser("lattice", help="lattice reports").add_subparsers(dest="action", required=True)
    info = lat.add_parser("info", help="generators, invariants and the pole-critical check")
    _common(info)
    info.add_argument("--require-pole-critical", dest="require_pole_critical", action="store_true", default=None)
    info.set_defaults(handler=cmd_lattice_info)

    em = verbs.add_parser("escape-map", help="classify a window of parameters")
    _common(em)
    em.add_argument("--center", type=_pair)
    em.add_argument("--radius", type=float)
    em.add_argument("--resolution", type=int)
    em.add_argument("--map-depth", dest="map_depth", type=int)
    em.set_defaults(handler=cmd_escape_map)

    cb = verbs.add_parser("cantor", help="cylinder families").add_subparsers(dest="action", required=True)
    build = cb.add_parser("build", help="build a nested cylinder family")
    _common(build)
    build.add_argument("--depth", type=int)
    build.add_argument("--branching", type=int)
    build.add_argument("--samples", type=int)
    build.set_defaults(handler=cmd_cantor_build)

    db = verbs.add_parser("dim", help="dimension bounds").add_subparsers(dest="action", required=True)
    bound = db.add_parser("bound", help="lower bound from a nested family")
    _common(bound)
    bound.add_argument("--n-max", dest="n_max", type=int)
    bound.add_argument("--family", choices=FAMILIES)
    bound.set_defaults(handler=cmd_dim_bound)

    ob = verbs.add_parser("orbit", help="iterate the first critical point")
    _common(ob)
    ob.add_argument("--beta", type=_pair)
    ob.add_argument("--steps", dest="orbit_steps", type=int)
    ob.add_argument("--dps", type=int, help="iterate in arbitrary precision with this many digits")
    ob.add_argument("--certificate", action="store_true", help="apply the growth certificate with R1 of the construction")
    ob.set_defaults(handler=cmd_orbit)

    vf = verbs.add_parser("verify", help="invariant suite").add_subparsers(dest="action", required=True)
    va = vf.add_parser("all", help="run every check")
    _common(va)
    va.set_defaults(handler=cmd_verify_all)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    for name in RunConfig.__dataclass_fields__:
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    if getattr(args, "lattice", None) is not None:
        cfg.lattice = args.lattice
    return cfg.validate()


# ------------------------------------------------------------------- helpers
def _c(z) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


def _emit(obj, compact: bool = False) -> None:
    print(json.dumps(obj) if compact else json.dumps(obj, indent=1))


def _write(cfg: RunConfig, name: str, text: str) -> str:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _constants(cfg: RunConfig, ev: EllipticEvaluator):
    eps0 = cfg.eps0 if cfg.eps0 is not None else default_eps0(ev.lattice)
    pd = estimate_pole_constants(ev, eps0, cfg.r)
    consts = choose_constants(ev, pd, a=cfg.a, eps=cfg.eps)
    return consts


def pole_critical_residual(ev: EllipticEvaluator) -> float:
    """Largest distance from a critical value to the lattice, relative to |lambda1|."""
    vals = np.array(critical_values(ev))
    _, _, b = nearest_lattice_point(ev.lattice, vals)
    return float(np.max(np.abs(vals - b)) / abs(ev.lattice.lambda1))


# ------------------------------------------------------------------ commands
def cmd_lattice_info(cfg: RunConfig, args) -> int:
    lat = cfg.make_lattice()
    ev = EllipticEvaluator(lat)
    direct = invariants(lat)
    ode_ok, ode_detail = check_ode(ev)
    residual = pole_critical_residual(ev)
    report = {
        "lambda1": _c(lat.lambda1),
        "lambda2": _c(lat.lambda2),
        "tau": _c(lat.tau),
        "is_triangular": lat.is_triangular(),
        "invariants": {
            "g2": _c(ev.g2),
            "g3": _c(ev.g3),
            "direct_g2": _c(direct.g2),
            "direct_g3": _c(direct.g3),
            "truncation_radius": direct.truncation_radius,
            "tail_bound_g2": direct.tail_bound_g2,
            "tail_bound_g3": direct.tail_bound,
        },
        "critical_points": [_c(c) for c in critical_points(ev)],
        "critical_values": [_c(e) for e in critical_values(ev)],
        "pole_critical_residual": residual,
        "pole_critical": residual < POLE_CRITICAL_TOL,
        "differential_equation": ode_detail,
    }
    _emit(report)
    if not ode_ok:
        raise CommandFailure(EXIT_VERIFY, "differential equation check failed")
    if cfg.require_pole_critical and not residual < POLE_CRITICAL_TOL:
        raise CommandFailure(EXIT_VERIFY, f"lattice is not pole-critical (residual {residual:.3e})")
    return EXIT_OK


def cmd_escape_map(cfg: RunConfig, args) -> int:
    ev = EllipticEvaluator(cfg.make_lattice())
    consts = _constants(cfg, ev)
    emap = escape_map(ev, cfg.center_complex, cfg.radius, cfg.resolution, cfg.map_depth, consts.R1, threads=cfg.threads)
    sym = symmetry_agreement(ev, emap, consts.R1, seed=cfg.seed)
    raster = _write(cfg, "escape_map.pgm", emap.to_pgm())
    summary = _write(cfg, "escape_map.csv", emap.summary_csv(sym))
    _emit({"raster": raster, "summary": summary, "counts": emap.counts(), "R1": consts.R1,
           "failure_rate": emap.failure_rate, "symmetry_agreement": sym})
    if emap.failure_rate > MAX_FAILURE_RATE:
        raise CommandFailure(EXIT_EVALUATOR, f"evaluator failure rate {emap.failure_rate:.3%} exceeds 1%")
    return EXIT_OK


def cmd_cantor_build(cfg: RunConfig, args) -> int:
    ev = EllipticEvaluator(cfg.make_lattice())
    consts = _constants(cfg, ev)
    tree = build_family(ev, consts, cfg.depth, cfg.branching, samples=cfg.samples, threads=cfg.threads)
    stats = family_stats(tree, ev.lattice)
    tree_path = _write(cfg, "tree.json", tree.dumps() + "\n")
    stats_path = _write(cfg, "stats.csv", stats_csv(stats))
    _emit({"tree": tree_path, "stats": stats_path, "cylinders": len(tree.cylinders), "failures": tree.failures,
           "a": consts.a, "a0": consts.a0, "eps": consts.eps, "R1": consts.R1})
    return EXIT_OK


def cmd_dim_bound(cfg: RunConfig, args) -> int:
    if cfg.family in ("ternary", "dust"):
        spec = ternary_cantor_spec() if cfg.family == "ternary" else cantor_dust_spec()
        exact = math.log(2) / math.log(3) if cfg.family == "ternary" else math.log(4) / math.log(3)
        b = mcmullen_bound(spec, cfg.n_max, formula_value=exact)
        _emit({"family": cfg.family, "n_max": cfg.n_max, "extrapolated": b.extrapolated, "liminf": b.liminf,
               "exact": exact, "gap": abs(b.extrapolated - exact)})
        return EXIT_OK
    ev = EllipticEvaluator(cfg.make_lattice())
    consts = _constants(cfg, ev)
    rep = consistency_check(consts, cfg.n_max)
    out = rep.to_json()
    out.update({"family": "cylinder", "a_policy": "auto (2 a0)" if cfg.a == "auto" else "requested",
                "a0": consts.a0, "analytic_bound": analytic_bound(consts.a)})
    _emit(out, compact=True)
    if not rep.passed:
        raise CommandFailure(EXIT_CONSISTENCY, f"gap {rep.gap:.3e} exceeds tolerance {rep.tolerance:.3e}")
    return EXIT_OK


def cmd_orbit(cfg: RunConfig, args) -> int:
    ev = EllipticEvaluator(cfg.make_lattice(), dps=args.dps)
    beta = complex(*cfg.beta) if cfg.beta is not None else 1.0 + 0j
    R_base = _constants(cfg, ev).R1 if args.certificate else None
    if args.dps:
        with ev.precision():
            tr = orbit(ev, ev.to_mp(beta), critical_points(ev, mp=True)[0], cfg.orbit_steps, R_base)
    else:
        tr = orbit(ev, beta, critical_points(ev)[0], cfg.orbit_steps, R_base)
    sys.stdout.write(tr.to_csv())
    return EXIT_OK


def cmd_verify_all(cfg: RunConfig, args) -> int:
    m = cfg.m if cfg.lattice is None else -3
    results = run_all(m=m, r=cfg.r, threads=cfg.threads)
    _emit({"checks": [r.to_json() for r in results], "passed": all(r.passed for r in results)})
    if not all(r.passed for r in results):
        raise CommandFailure(EXIT_VERIFY, "some checks failed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        return args.handler(cfg, args)
    except CommandFailure as exc:
        print(f"weierdim: {exc}", file=sys.stderr)
        return exc.code
    except (InvalidArgumentError, InvalidLatticeError, InvalidConstantsError, ConstructionInfeasibleError) as exc:
        print(f"weierdim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RootNotFoundError as exc:
        print(f"weierdim: root finding exhausted: {exc}", file=sys.stderr)
        return EXIT_ROOT


if __name__ == "__main__":
    sys.exit(main())
