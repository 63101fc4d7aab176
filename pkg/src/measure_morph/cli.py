"""Command-line front end.

    measure-morph verify --family g0 --m 1 --functional point-square --t0 0.5 \\
        --paths 100000 --steps 256 --seed 42 --out r.json

Exit status: 0 on success, 1 on usage or numerical errors (a JSON error
object goes to stderr), 2 when ``verify`` or ``feynman-kac`` finds
z_score >= 4.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import diffeo as dm
from .errors import MeasureMorphError
from .fieldmodes import DEFAULT_WINDOW, dispersion_table, write_table_csv
from .measure import COEFFICIENTS, estimate_identity, feynman_kac, gaussian_oracle
from .paths import MAX_STEPS, Functional, make_grid, sample_paths, write_paths_csv
from .substitution import verify_sub_identity

SEED_ENV = "MEASURE_MORPH_SEED"
Z_FAIL = 4.0

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2

FAMILIES = ("identity", "g0", "mobius", "mobius-g0", "exp2m", "log2m", "power")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


@dataclass
class RunConfig:
    """Everything that determines a run's output (worker count excluded)."""

    command: str
    interval: dict = field(default_factory=dict)
    m: Optional[float] = None
    grid_n: Optional[int] = None
    n_paths: Optional[int] = None
    seed: Optional[int] = None
    functional: Optional[dict] = None
    diffeo: Optional[dict] = None
    format: str = "json"
    options: dict = field(default_factory=dict)


def _add_interval(p):
    p.add_argument("--a", type=float, default=0.0, help="interval start (default 0)")
    p.add_argument("--b", type=float, default=1.0, help="interval end (default 1)")


def _add_run(p, paths=10000, steps=256):
    p.add_argument("--paths", type=int, default=paths, help=f"number of sampled paths (default {paths})")
    p.add_argument("--steps", type=int, default=steps, help=f"grid steps n (default {steps})")
    p.add_argument("--seed", type=int, default=None, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")


def _add_output(p, default_format="json"):
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), default=default_format)


def _add_diffeo(p, default="g0"):
    p.add_argument("--family", choices=FAMILIES, default=default)
    p.add_argument("--m", type=float, default=1.0, help="mass / rate parameter (default 1)")
    p.add_argument("--delta", type=float, default=1.0, help="Möbius parameter (default 1)")
    p.add_argument("--sigma", type=float, default=1.5, help="power-law exponent (default 1.5)")
    p.add_argument("--tmin", type=float, default=None, help="half-axis window start")
    p.add_argument("--tmax", type=float, default=None, help="half-axis window end")
    p.add_argument("--diffeo", default=None, help="JSON diffeo spec; overrides --family")


def _add_functional(p, default="point-square"):
    p.add_argument("--functional", choices=Functional.KINDS, default=default)
    p.add_argument("--t0", type=float, default=None, help="evaluation time (default interval midpoint)")
    p.add_argument("--lam", type=float, default=1.0, help="exp-quadratic strength (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="measure-morph", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("schwarzian", help="print g, g' and S_g at probe points")
    _add_diffeo(p)
    _add_interval(p)
    p.add_argument("--probes", type=int, default=11)
    _add_output(p, "csv")

    p = sub.add_parser("sample", help="emit sampled paths as CSV")
    _add_diffeo(p, default="identity")
    _add_interval(p)
    _add_run(p, paths=10, steps=64)
    p.add_argument("--kind", choices=("bridge", "wiener"), default="bridge")
    p.add_argument("--pull-back", action="store_true", help="sample on the pull-back grid of the diffeo")
    _add_output(p, "csv")

    p = sub.add_parser("verify", help="estimate both sides of the reweighting identity")
    _add_diffeo(p)
    _add_interval(p)
    _add_functional(p)
    _add_run(p)
    p.add_argument("--coefficient", choices=COEFFICIENTS, default="normalized")
    _add_output(p)

    p = sub.add_parser("feynman-kac", help="F = 1 check with the exponential map")
    p.add_argument("--m", type=float, default=1.0)
    _add_interval(p)
    _add_run(p)
    p.add_argument("--coefficient", choices=COEFFICIENTS, default="normalized")
    _add_output(p)

    p = sub.add_parser("substitute", help="verify the linear substitution on Wiener paths")
    p.add_argument("--m", type=float, default=1.0)
    _add_interval(p)
    _add_functional(p)
    _add_run(p, steps=64)
    _add_output(p)

    p = sub.add_parser("modes", help="per-mode dispersion table")
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--k", default="0.5,1,2,4", help="comma-separated wave numbers")
    p.add_argument("--tmin", type=float, default=DEFAULT_WINDOW[0])
    p.add_argument("--tmax", type=float, default=DEFAULT_WINDOW[1])
    p.add_argument("--probes", type=int, default=1000)
    _add_output(p, "csv")

    p = sub.add_parser("oracle", help="exact finite-n values of both sides")
    _add_diffeo(p)
    _add_interval(p)
    _add_functional(p)
    p.add_argument("--steps", type=int, default=256)
    p.add_argument("--coefficient", choices=COEFFICIENTS, default="normalized")
    _add_output(p)
    return parser


# ---------------------------------------------------------------------------


def _seed(args) -> int:
    if args.seed is not None:
        seed = args.seed
    else:
        raw = os.environ.get(SEED_ENV)
        try:
            seed = int(raw) if raw is not None else 0
        except ValueError:
            raise UsageError(f"{SEED_ENV}={raw!r} is not an integer") from None
    if not 0 <= seed < 2**64:
        raise UsageError("seed must be a 64-bit unsigned integer")
    return seed


def _check_run(args):
    if not 2 <= args.steps <= MAX_STEPS:
        raise UsageError(f"--steps must be in [2, {MAX_STEPS}]")
    if getattr(args, "paths", 1) < 1:
        raise UsageError("--paths must be >= 1")
    if getattr(args, "threads", 1) < 1:
        raise UsageError("--threads must be >= 1")


def _diffeo(args) -> dm.Diffeo:
    if args.diffeo is not None:
        try:
            spec = json.loads(args.diffeo)
        except json.JSONDecodeError as exc:
            raise UsageError(f"--diffeo is not valid JSON: {exc}") from None
        return dm.make_diffeo(spec)
    fam = args.family
    window = None
    if args.tmin is not None or args.tmax is not None:
        window = [args.tmin, args.tmax]
    spec = {"family": fam}
    if fam in ("identity", "g0", "mobius", "mobius-g0"):
        spec.update(a=args.a, b=args.b)
    if fam in ("g0", "mobius-g0", "exp2m", "log2m"):
        spec["m"] = args.m
    if fam in ("mobius", "mobius-g0"):
        spec["delta"] = args.delta
    if fam == "power":
        spec["sigma"] = args.sigma
    if fam in ("exp2m", "log2m", "power") and window is not None:
        spec["window"] = window
    return dm.make_diffeo(spec)


def _functional(args) -> Functional:
    t0 = args.t0 if args.t0 is not None else 0.5 * (args.a + args.b)
    if args.functional == "constant":
        return Functional.constant()
    if args.functional == "point-square":
        return Functional.point_square(t0)
    if args.functional == "exp-quadratic":
        return Functional.exp_quadratic(args.lam, t0)
    return Functional.integrated_square()


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _emit(text: str, out: Optional[str]):
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _report(report, config: RunConfig) -> str:
    d = report.to_dict()
    d["config"] = asdict(config)
    return _dump_json(d)


def _cmd_schwarzian(args):
    d = _diffeo(args)
    t = dm.probe_points(d, args.probes)
    b = d.derivs(t)
    s = d.schwarzian(t)
    cfg = RunConfig("schwarzian", {"a": args.a, "b": args.b}, diffeo=d.to_dict(), format=args.format,
                    options={"probes": args.probes})
    if args.format == "json":
        rows = [{"t": float(ti), "g": float(gi), "g1": float(g1), "schwarzian": float(si)}
                for ti, gi, g1, si in zip(t, b.g, b.g1, s)]
        return _dump_json({"rows": rows, "config": asdict(cfg)}), EXIT_OK
    buf = io.StringIO()
    buf.write("t,g,g1,schwarzian\n")
    for row in zip(t, b.g, b.g1, s):
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue(), EXIT_OK


def _cmd_sample(args):
    _check_run(args)
    seed = _seed(args)
    g = _diffeo(args) if args.pull_back else None
    grid = make_grid((args.a, args.b), args.steps, g)
    values = sample_paths(grid, seed, args.paths, kind=args.kind, threads=args.threads)
    if args.format == "json":
        cfg = RunConfig("sample", {"a": args.a, "b": args.b}, grid_n=args.steps, n_paths=args.paths, seed=seed,
                        diffeo=None if g is None else g.to_dict(), format="json", options={"kind": args.kind})
        return _dump_json({"t": grid.nodes.tolist(), "paths": values.tolist(), "config": asdict(cfg)}), EXIT_OK
    buf = io.StringIO()
    write_paths_csv(buf, grid, values)
    return buf.getvalue(), EXIT_OK


def _verdict(report):
    return EXIT_VERIFY_FAILED if not report.z_score < Z_FAIL else EXIT_OK


def _cmd_verify(args):
    _check_run(args)
    seed = _seed(args)
    g = _diffeo(args)
    f = _functional(args)
    report = estimate_identity(f, g, n_paths=args.paths, grid_n=args.steps, seed=seed, interval=(args.a, args.b),
                               threads=args.threads, coefficient=args.coefficient)
    cfg = RunConfig("verify", {"a": args.a, "b": args.b}, getattr(g, "m", None), args.steps, args.paths, seed,
                    f.to_dict(), g.to_dict(), "json", {"coefficient": args.coefficient})
    return _report(report, cfg), _verdict(report)


def _cmd_feynman_kac(args):
    _check_run(args)
    seed = _seed(args)
    report = feynman_kac(args.m, (args.a, args.b), n_paths=args.paths, grid_n=args.steps, seed=seed,
                         threads=args.threads, coefficient=args.coefficient)
    cfg = RunConfig("feynman-kac", {"a": args.a, "b": args.b}, args.m, args.steps, args.paths, seed,
                    Functional.constant().to_dict(), None, "json", {"coefficient": args.coefficient})
    return _report(report, cfg), _verdict(report)


def _cmd_substitute(args):
    _check_run(args)
    seed = _seed(args)
    f = _functional(args)
    report = verify_sub_identity(f, args.m, n_paths=args.paths, grid_n=args.steps, seed=seed,
                                 interval=(args.a, args.b), threads=args.threads)
    cfg = RunConfig("substitute", {"a": args.a, "b": args.b}, args.m, args.steps, args.paths, seed,
                    f.to_dict(), None, "json")
    return _report(report, cfg), EXIT_OK


def _cmd_modes(args):
    try:
        ks = [float(v) for v in args.k.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"--k must be comma-separated numbers, got {args.k!r}") from None
    rows = dispersion_table(ks, args.m, (args.tmin, args.tmax), n_probes=args.probes)
    if args.format == "json":
        cfg = RunConfig("modes", m=args.m, format="json",
                        options={"k": ks, "window": [args.tmin, args.tmax], "probes": args.probes})
        return _dump_json({"rows": rows, "config": asdict(cfg)}), EXIT_OK
    buf = io.StringIO()
    write_table_csv(buf, rows)
    return buf.getvalue(), EXIT_OK


def _cmd_oracle(args):
    if not 2 <= args.steps <= MAX_STEPS:
        raise UsageError(f"--steps must be in [2, {MAX_STEPS}]")
    g = _diffeo(args)
    f = _functional(args)
    grid = make_grid((args.a, args.b), args.steps)
    lhs, rhs = gaussian_oracle(grid, g, f, coefficient=args.coefficient)
    cfg = RunConfig("oracle", {"a": args.a, "b": args.b}, getattr(g, "m", None), args.steps, None, None,
                    f.to_dict(), g.to_dict(), "json", {"coefficient": args.coefficient})
    return _dump_json({"oracle_lhs": lhs, "oracle_rhs": rhs, "config": asdict(cfg)}), EXIT_OK


COMMANDS = {
    "schwarzian": _cmd_schwarzian,
    "sample": _cmd_sample,
    "verify": _cmd_verify,
    "feynman-kac": _cmd_feynman_kac,
    "substitute": _cmd_substitute,
    "modes": _cmd_modes,
    "oracle": _cmd_oracle,
}


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        text, status = COMMANDS[args.command](args)
        _emit(text, args.out)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_ERROR
    except (MeasureMorphError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_ERROR
    except OSError as exc:
        _error(type(exc).__name__, str(exc))
        return EXIT_ERROR
    return status


def main():  # pragma: no cover
    sys.exit(run_command())


if __name__ == "__main__":  # pragma: no cover
    main()
