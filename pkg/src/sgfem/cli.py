"""Command-line front end: configure and run the adaptive loop, write traces.

Subcommands:
  run     one adaptive run, one CSV trace
  sweep   Cartesian grid over the marking parameters, one CSV per point plus
          a summary table (cost and fitted rate per parameter pair)

Runs are fully deterministic: identical configurations produce byte-identical
output files.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .driver import (
    AdaptiveTrace,
    cumulative_cost,
    effectivity,
    fit_rate,
    reference_solution,
    run_adaptive,
)
from .marking import CRITERIA, MarkingParams
from .mesh import initial_lshape, read_mesh
from .problem import ProblemSpec, amplitude_from_tau, parse_config, spec_from_config

__all__ = ["main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CAP = 2
EXIT_USAGE = 64

CSV_HEADER = (
    "iter,refine_type,dim_x,card_p,n_total,eta,eta_spatial,eta_param,"
    "energy_sq,marked,max_active_dim,solver_iters,cum_cost,zeta"
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _g17(x: float) -> str:
    return f"{x:.17g}"


def format_trace_csv(trace: AdaptiveTrace, zetas=None) -> str:
    lines = [CSV_HEADER]
    cost = 0
    for i, rec in enumerate(trace.records):
        cost += rec.n_dof
        zeta = ""
        if zetas is not None and zetas[i] is not None:
            zeta = _g17(zetas[i])
        lines.append(
            ",".join(
                [
                    str(rec.level),
                    rec.refine_type,
                    str(rec.dim_x),
                    str(rec.card_p),
                    str(rec.n_dof),
                    _g17(rec.eta),
                    _g17(rec.eta_spatial),
                    _g17(rec.eta_parametric),
                    _g17(rec.energy_sq),
                    str(rec.n_marked),
                    str(rec.max_active_dim),
                    str(rec.solver_iterations),
                    str(cost),
                    zeta,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _config_echo(args, spec: ProblemSpec) -> str:
    keys = [
        ("criterion", args.criterion),
        ("theta_x", args.theta_x),
        ("theta_p", args.theta_p),
        ("vartheta", args.vartheta),
        ("tol", args.tol),
        ("sigma", spec.sigma),
        ("amplitude", spec.amplitude),
        ("tau", spec.tau),
        ("mesh", args.mesh),
        ("solver_tol", args.solver_tol),
        ("max_iter", args.max_iter),
        ("max_dof", args.max_dof),
        ("with_reference", int(getattr(args, "with_reference", False))),
    ]
    return "".join(f"{k} = {v}\n" for k, v in keys)


def _build_spec(args) -> ProblemSpec:
    settings: dict = {}
    if args.config:
        settings = parse_config(Path(args.config).read_text(encoding="utf-8"))
    if args.sigma is not None:
        settings["sigma"] = args.sigma
    if args.tau is not None:
        settings.pop("amplitude", None)
        settings["tau"] = args.tau
    if args.amplitude is not None:
        if args.tau is not None:
            raise ValueError("--tau and --amplitude are mutually exclusive")
        settings.pop("tau", None)
        settings["amplitude"] = args.amplitude
    if args.mesh is not None:
        settings["mesh"] = args.mesh
    args.mesh = settings.get("mesh", "lshape")
    if "tau" in settings and not 0.0 <= settings["tau"] < 1.0:
        raise ValueError(f"inadmissible problem: tau = {settings['tau']} not in [0, 1)")
    return spec_from_config(settings)


def _load_mesh(source: str):
    if source == "lshape":
        return initial_lshape()
    return read_mesh(source)


def _add_common_flags(p: _Parser) -> None:
    p.add_argument("--criterion", choices=CRITERIA, default="A")
    p.add_argument("--vartheta", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--mesh", default=None, help="'lshape' or a mesh file path")
    p.add_argument("--solver-tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--max-dof", type=int, default=200_000)
    p.add_argument("--config", default=None, help="key=value problem config file")


def _parse_range(text: str) -> list[float]:
    """Parse '0.5', '0.1,0.3,0.5', or '0.1..0.9' (optional '..step')."""
    if ".." in text:
        parts = text.split("..")
        if len(parts) == 2:
            lo, hi, step = float(parts[0]), float(parts[1]), 0.1
        elif len(parts) == 3:
            lo, hi, step = float(parts[0]), float(parts[1]), float(parts[2])
        else:
            raise ValueError(f"bad range {text!r}")
        values = []
        k = 0
        while True:
            v = round(lo + k * step, 12)
            if v > hi + 1e-12:
                break
            values.append(v)
            k += 1
        if not values:
            raise ValueError(f"empty range {text!r}")
        return values
    return [float(tok) for tok in text.split(",")]


def _run_single(spec, mesh, args, theta_x, theta_p):
    params = MarkingParams(theta_x=theta_x, theta_p=theta_p, vartheta=args.vartheta)
    return run_adaptive(
        spec,
        criterion=args.criterion,
        params=params,
        tol=args.tol,
        max_iter=args.max_iter,
        max_dof=args.max_dof,
        solver_tol=args.solver_tol,
        mesh=mesh,
    )


def _cmd_run(args) -> int:
    spec = _build_spec(args)
    mesh = _load_mesh(args.mesh)
    trace = _run_single(spec, mesh, args, args.theta_x, args.theta_p)
    zetas = None
    if args.with_reference:
        u_ref = reference_solution(trace, spec, args.solver_tol)
        zetas = effectivity(trace, u_ref, args.solver_tol)
    out = Path(args.output)
    _write_atomic(out, format_trace_csv(trace, zetas))
    _write_atomic(out.with_suffix(out.suffix + ".config"), _config_echo(args, spec))
    print(
        f"levels={trace.num_levels} eta={trace.records[-1].eta:.6g} "
        f"cost={cumulative_cost(trace)} stop={trace.stop_reason}"
    )
    return EXIT_OK if trace.reached_tol else EXIT_CAP


def _cmd_sweep(args) -> int:
    spec = _build_spec(args)
    mesh = _load_mesh(args.mesh)
    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = [(tx, tp) for tx in _parse_range(args.theta_x) for tp in _parse_range(args.theta_p)]

    workers = max(1, int(os.environ.get("SGFEM_THREADS", "1")))

    def job(point):
        tx, tp = point
        trace = _run_single(spec, mesh, args, tx, tp)
        name = f"run_thx{tx:g}_thp{tp:g}.csv"
        _write_atomic(outdir / name, format_trace_csv(trace))
        try:
            rate = fit_rate(trace)
        except ValueError:
            rate = float("nan")
        return (tx, tp, cumulative_cost(trace), rate, trace.num_levels, trace.reached_tol)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, grid))
    else:
        results = [job(point) for point in grid]

    lines = ["theta_x,theta_p,cost,rate,levels,reached_tol"]
    for tx, tp, cost, rate, levels, ok in results:
        lines.append(f"{tx:g},{tp:g},{cost},{_g17(rate)},{levels},{int(ok)}")
    _write_atomic(outdir / "summary.csv", "\n".join(lines) + "\n")
    print(f"sweep complete: {len(grid)} runs, summary in {outdir / 'summary.csv'}")
    return EXIT_OK if all(r[5] for r in results) else EXIT_CAP


def build_parser() -> _Parser:
    parser = _Parser(prog="sgfem", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single adaptive run")
    _add_common_flags(p_run)
    p_run.add_argument("--theta-x", type=float, default=0.5)
    p_run.add_argument("--theta-p", type=float, default=0.5)
    p_run.add_argument("--with-reference", action="store_true")
    p_run.add_argument("--output", default="trace.csv")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid of adaptive runs")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--theta-x", default="0.5", help="value, list, or lo..hi[..step]")
    p_sweep.add_argument("--theta-p", default="0.5", help="value, list, or lo..hi[..step]")
    p_sweep.add_argument("--output-dir", default="sweep")
    p_sweep.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"sgfem: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
