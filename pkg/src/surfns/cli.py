"""Command-line entry points: solve, convergence, geometry-check and dump.

Exit codes: 0 success, 1 run abort or failed check, 2 usage error.
Configuration precedence is flags > JSON config file > defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

GEOMETRY_BOUNDS = {
    "distance": (1.7, 2.3),
    "normal": (0.7, 1.3),
    "area": (1.7, 2.3),
}

# flag name -> RunConfig field
RUN_FLAGS = {
    "h": "h",
    "t_end": "T",
    "dt": "dt",
    "bdf": "bdf",
    "m": "m",
    "q": "q",
    "c_delta": "c_delta",
    "mu": "mu",
    "solver": "solver",
    "tol": "tol",
    "bootstrap": "bootstrap",
}


class UsageError(ValueError):
    pass


def _set_threads(n: int | None) -> None:
    # must run before numpy / MKL are loaded to take effect
    if n:
        for var in ("OMP_NUM_THREADS", "MKL_NUM_THREADS", "OPENBLAS_NUM_THREADS"):
            os.environ[var] = str(n)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with RunConfig fields")
    p.add_argument("--h", type=float, help="mesh size (cube edge)")
    p.add_argument("--t-end", type=float, dest="t_end", help="final time T")
    p.add_argument("--dt", type=float, help="time step")
    p.add_argument("--bdf", type=int, choices=(1, 2, 3))
    p.add_argument("--m", type=int, help="velocity degree is m+1, pressure degree m")
    p.add_argument("--q", type=int, help="geometry degree (only 1 is supported)")
    p.add_argument("--c-delta", type=float, dest="c_delta", help="band width constant")
    p.add_argument("--mu", type=float, help="viscosity")
    p.add_argument("--solver", choices=("auto", "pardiso", "splu", "gmres"))
    p.add_argument("--tol", type=float, help="relative residual tolerance")
    p.add_argument("--bootstrap", choices=("exact", "bdf1"))
    p.add_argument("--no-advective-correction", action="store_true", default=None,
                   help="drop the normal-derivative correction of the time derivative")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--threads", type=int, help="thread count for BLAS / PARDISO")
    p.add_argument("--seed", type=int, default=0, help="seed recorded in the report")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="surfns", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one (h, dt) configuration")
    _add_run_flags(p)
    p.add_argument("--surface-dump", choices=("none", "obj", "vtk"), default="none",
                   help="write the final discrete surface")

    p = sub.add_parser("convergence", help="refinement ladder with CSV output")
    _add_run_flags(p)
    p.add_argument("--levels", type=int, default=3, help="number of refinement levels (>= 2)")

    p = sub.add_parser("geometry-check", help="surface approximation orders")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--h0", type=float, default=0.5)
    p.add_argument("--time", type=float, default=0.0)
    p.add_argument("--plane", action="store_true", help="use the flat surface z = 0.1")
    p.add_argument("--strict", action="store_true", help="exit 1 when an order leaves its bounds")
    p.add_argument("--json", action="store_true", help="print the table as JSON")

    p = sub.add_parser("dump", help="write the linear system of one step in Matrix Market format")
    _add_run_flags(p)
    p.add_argument("--step", type=int, default=None, help="step index (default: first solved step)")
    return parser


def resolve_config(args) -> "RunConfig":  # noqa: F821
    """Merge defaults, the optional JSON config and explicit flags."""
    from .integrator import RunConfig

    values = {}
    if getattr(args, "config", None) is not None:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    for flag, name in RUN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    if getattr(args, "no_advective_correction", None):
        values["advective_correction"] = False
    try:
        return RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _write_report(path: Path, result, seed: int) -> None:
    data = result.report.to_dict()
    data.update({
        "config": asdict(result.config),
        "seed": seed,
        "stability_ratio": result.stability_ratio,
        "max_u_norm": result.max_u_norm,
        "max_exact_norm": result.max_exact_norm,
    })
    path.write_text(json.dumps(data, indent=1))


def cmd_solve(args) -> int:
    from dataclasses import replace

    from .cut import write_obj, write_vtk
    from .integrator import Integrator, StepAbort

    cfg = resolve_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, log_path=str(args.out / "diagnostics.jsonl"))
    integrator = Integrator(cfg)
    try:
        result = integrator.run()
    except StepAbort as exc:
        print(f"abort at step {exc.step}: {exc.reason}", file=sys.stderr)
        return EXIT_FAIL
    _write_report(args.out / "report.json", result, args.seed)
    if args.surface_dump != "none":
        cut = integrator.history[-1].cut
        writer = write_obj if args.surface_dump == "obj" else write_vtk
        writer(cut, args.out / f"surface.{args.surface_dump}")
    totals = result.report.totals()
    print(" ".join(f"{k}={v:.6e}" for k, v in totals.items()), f"N={result.n_steps}")
    return EXIT_OK


def cmd_convergence(args) -> int:
    from dataclasses import replace

    from .integrator import Integrator, StepAbort, convergence_ladder
    from .metrics import estimated_order, write_csv

    if args.levels < 2:
        raise UsageError("convergence needs at least 2 levels")
    base = resolve_config(args)
    args.out.mkdir(parents=True, exist_ok=True)
    reports = []
    for k, (h, dt) in enumerate(convergence_ladder(base.bdf, args.levels, base.h, base.dt)):
        cfg = replace(base, h=h, dt=dt, log_path=str(args.out / f"diagnostics_{k}.jsonl"))
        try:
            result = Integrator(cfg).run()
        except StepAbort as exc:
            print(f"abort at level {k} (h={h:g}, dt={dt:g}), step {exc.step}: {exc.reason}", file=sys.stderr)
            return EXIT_FAIL
        _write_report(args.out / f"report_{k}.json", result, args.seed)
        reports.append(result.report)
        print(f"h={h:g} dt={dt:g} " + " ".join(f"{c}={v:.4e}" for c, v in result.report.totals().items()))
    csv_path = args.out / "convergence.csv"
    write_csv(csv_path, reports)
    _write_gnuplot(args.out / "convergence.gp", csv_path.name)
    for a, b in zip(reports[:-1], reports[1:]):
        ta, tb = a.totals(), b.totals()
        orders = {c: estimated_order(ta[c], tb[c], a.h / b.h) for c in ta}
        print(f"order {a.h:g}->{b.h:g}: " + " ".join(f"{c}={v:.2f}" for c, v in orders.items()))
    return EXIT_OK


def _write_gnuplot(path: Path, csv_name: str) -> None:
    path.write_text(
        "set datafile separator ','\n"
        "set logscale xy\nset key top left\nset xlabel 'h'\n"
        f"plot '{csv_name}' using 1:2 with linespoints title 'L2Energyu', \\\n"
        f"     '{csv_name}' using 1:3 with linespoints title 'L2L2u', \\\n"
        f"     '{csv_name}' using 1:4 with linespoints title 'L1Energyp', \\\n"
        f"     '{csv_name}' using 1:5 with linespoints title 'L2L2p'\n"
    )


def geometry_verdict(orders, bounds=GEOMETRY_BOUNDS) -> list[str]:
    """Names of the columns whose last observed order leaves its bounds."""
    if not orders:
        return []
    last = orders[-1]
    bad = []
    for name, (lo, hi) in bounds.items():
        v = last[name]
        if v == "exact":
            continue
        if isinstance(v, float) and (math.isnan(v) or not lo <= v <= hi):
            bad.append(name)
    return bad


def cmd_geometry_check(args) -> int:
    from .levelset import PAPER_SPHERE, Plane
    from .metrics import GEOMETRY_COLUMNS, geometry_study
    from .mesh import PAPER_DOMAIN

    if args.levels < 1 or args.h0 <= 0:
        raise UsageError("levels must be >= 1 and h0 positive")
    if args.plane:
        geometry = Plane(offset=0.1)
        lengths = PAPER_DOMAIN.lengths
        exact_area = float(lengths[0] * lengths[1])
    else:
        geometry, exact_area = PAPER_SPHERE, None
    rows, orders = geometry_study(args.levels, args.h0, args.time, geometry, exact_area=exact_area)
    if args.json:
        print(json.dumps({"rows": rows, "orders": orders}))
    else:
        print("h".ljust(10) + "".join(c.rjust(18) for c in GEOMETRY_COLUMNS))
        for r in rows:
            print(f"{r['h']:<10g}" + "".join(f"{r[c]:18.6e}" for c in GEOMETRY_COLUMNS))
        for o in orders:
            cells = [(v if isinstance(v, str) else f"{v:.3f}").rjust(18) for v in (o[c] for c in GEOMETRY_COLUMNS)]
            print("order".ljust(10) + "".join(cells))
    bad = geometry_verdict(orders)
    if bad:
        print("orders outside bounds: " + ", ".join(bad), file=sys.stderr)
        if args.strict:
            return EXIT_FAIL
    return EXIT_OK


def cmd_dump(args) -> int:
    from .integrator import Integrator, StepAbort

    cfg = resolve_config(args)
    integrator = Integrator(cfg)
    step = integrator.n_bootstrap if args.step is None else args.step
    if not integrator.n_bootstrap <= step <= cfg.n_steps:
        raise UsageError(f"step must lie in [{integrator.n_bootstrap}, {cfg.n_steps}]")
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        integrator.advance_to(step)
        level, system, _, _ = integrator.assemble_step(step)
    except StepAbort as exc:
        print(f"abort at step {exc.step}: {exc.reason}", file=sys.stderr)
        return EXIT_FAIL
    prefix = args.out / f"step{step}"
    system.dump(prefix)
    from .cut import write_obj

    write_obj(level.cut, f"{prefix}_surface.obj")
    print(f"wrote {prefix}_*.mtx (n={system.size})")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "geometry-check": cmd_geometry_check,
    "dump": cmd_dump,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on bad usage
        return int(exc.code or 0)
    _set_threads(getattr(args, "threads", None))
    level = logging.INFO if getattr(args, "verbose", False) else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
