"""Command-line front end: run experiments, refinement sweeps, oracle
suites, and plots.

Exit status contract: 0 success, 2 configuration error, 3 positivity
failure during a run (partial outputs are still written), 4 oracle or
tolerance failure.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import get_backend
from .assembly import DensityState, PositivityLost
from .experiments import build_setup, run_experiment
from .metrics import (CONVERGENCE_HEADER, CSV_HEADER, convergence_table,
                      kl_growth_diagnostic)
from .mle import CONSISTENCY_HEADER, consistency_check
from .reference import CharacteristicTracer, get_problem, registered_problems
from .semidiscrete import FLUX_KINDS, SCHEME_KINDS, Scheme, dfrg_rhs
from .svgplot import LinePlot
from .timestepping import LIMITER_MODES

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_POSITIVITY = 3
EXIT_TOLERANCE = 4

TRAJECTORY_HEADER = "t,cell,node,coeff"


class ConfigError(Exception):
    pass


class SchemaError(Exception):
    pass


# -- experiment configuration -------------------------------------------------

_OVERRIDE_KEYS = ("scheme", "flux", "alpha", "p", "m", "cfl", "n_q", "t_final",
                  "sample_interval", "limiter_mode", "limiter_eps",
                  "velocity_mode", "backend")


def _parse_config_file(path: Path) -> dict:
    parser = configparser.ConfigParser()
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser.read(path)
    if "experiment" not in parser:
        raise ConfigError(f"config file {path} has no [experiment] section")
    raw = dict(parser["experiment"])
    if "problem" not in raw:
        raise ConfigError(f"config file {path} does not name a problem")
    return raw


def _coerce(key: str, value: str):
    if value == "" or value is None:
        return None
    if key in ("p", "m", "n_q"):
        return int(value)
    if key in ("cfl", "t_final", "sample_interval", "alpha", "limiter_eps"):
        return float(value)
    return value


def resolve_experiment(args) -> dict:
    """Merge config file (if the target is a path), registry, and CLI flags."""
    target = args.experiment
    settings: dict = {}
    if target.endswith(".cfg") or "/" in target or target == "meta.txt":
        raw = _parse_config_file(Path(target))
        for key, value in raw.items():
            if key == "problem":
                settings["problem"] = value
            elif key in _OVERRIDE_KEYS:
                settings[key] = _coerce(key, value)
            # unknown keys in handwritten files are rejected; meta files carry extras
            elif key not in ("tool_version", "dim", "backend_resolved", "dt_formula",
                             "u_max", "dt_base", "completed", "n_steps",
                             "failure_time", "failure_cell", "failure_stage"):
                raise ConfigError(f"unknown config key {key!r}")
    else:
        settings["problem"] = target
    for key in _OVERRIDE_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    try:
        settings["problem_spec"] = get_problem(settings["problem"])
    except KeyError as exc:
        raise ConfigError(str(exc)) from None
    settings.setdefault("scheme", "dfrg")
    if settings["scheme"] not in SCHEME_KINDS:
        raise ConfigError(f"unknown scheme {settings['scheme']!r}")
    if settings.get("flux", "upwind") not in FLUX_KINDS:
        raise ConfigError(f"unknown flux {settings.get('flux')!r}")
    return settings


def _build_from_settings(settings: dict):
    spec = settings["problem_spec"]
    try:
        scheme = Scheme(settings.get("scheme", "dfrg"),
                        settings.get("flux", "upwind"),
                        settings.get("alpha"))
        setup = build_setup(
            spec, scheme,
            p=settings.get("p"), m=settings.get("m"), n_q=settings.get("n_q"),
            cfl=settings.get("cfl"), t_final=settings.get("t_final"),
            sample_interval=settings.get("sample_interval"),
            limiter_mode=settings.get("limiter_mode", "auto"),
            limiter_eps=settings.get("limiter_eps", 1e-15),
            velocity_mode=settings.get("velocity_mode", "nodal"),
            backend=settings.get("backend"))
    except (ValueError, ImportError) as exc:
        raise ConfigError(str(exc)) from None
    return setup


# -- output writers ------------------------------------------------------------


def write_meta(path: Path, setup, settings: dict, result=None):
    tc = setup.time_config
    lines = {
        "tool_version": __version__,
        "problem": setup.problem.pid,
        "scheme": setup.scheme.kind,
        "flux": setup.scheme.flux,
        "alpha": "" if setup.scheme.alpha is None else repr(setup.scheme.alpha),
        "dim": setup.disc.dim,
        "p": setup.disc.basis.order,
        "m": setup.disc.mesh.m,
        "n_q": setup.disc.n_q,
        "cfl": repr(tc.cfl),
        "t_final": repr(tc.t_final),
        "sample_interval": repr(tc.sample_interval),
        "limiter_mode": tc.resolve_limiter(setup.scheme.kind),
        "limiter_eps": repr(tc.limiter_eps),
        "velocity_mode": setup.op.velocity_mode,
        "backend": setup.op.backend_name,
        "dt_formula": "cfl*h/u_max; u_max = max over basis nodes of |u| (1D) "
                      "or |u_x|+|u_y| (2D); steps subdivide each sample interval evenly",
        "u_max": repr(setup.op.u_max),
    }
    if result is not None:
        lines["dt_base"] = repr(result.dt_base)
        lines["n_steps"] = result.n_steps
        lines["completed"] = str(result.completed).lower()
        if result.failure is not None:
            lines["failure_time"] = repr(result.failure.t)
            lines["failure_cell"] = result.failure.cell
            lines["failure_stage"] = result.failure.stage
    with open(path, "w") as fh:
        fh.write("[experiment]\n")
        for k, v in lines.items():
            fh.write(f"{k}={v}\n")


def write_trajectory(path: Path, result, n_loc: int):
    with open(path, "w") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for t, coeffs in zip(result.times, result.states):
            r2 = coeffs.reshape(-1, n_loc)
            for cell in range(r2.shape[0]):
                for node in range(n_loc):
                    fh.write(f"{t!r},{cell},{node},{float(r2[cell, node])!r}\n")


def write_errors(path: Path, reports):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for rep in reports:
            fh.write(rep.csv_row() + "\n")


def _profile_series(disc, coeffs: np.ndarray, points_per_cell: int = 10):
    """Piecewise-polynomial profile with NaN separators at the cell breaks.

    For 2D states this is the slice along y = 0.5.
    """
    state = DensityState(disc, coeffs)
    m, h, p = disc.mesh.m, disc.h, disc.basis.order
    xs_local = np.linspace(0.0, 1.0, max(points_per_cell, p + 2))
    xs_out, ys_out = [], []
    from .basis import tensor_eval, tensor_index
    r2 = state.by_cell
    for ix in range(m):
        if disc.dim == 1:
            cell = ix
            local_pts = xs_local[:, None]
        else:
            iy = min(int(0.5 * m), m - 1)
            cell = ix * m + iy
            ly = 0.5 * m - iy
            local_pts = np.stack([xs_local, np.full_like(xs_local, ly)], axis=1)
        for lp in local_pts:
            val = 0.0
            for i in range(disc.n_loc):
                mi = tensor_index(disc.basis, i, disc.dim)
                val += r2[cell, i] * tensor_eval(disc.basis, mi, lp)
            xs_out.append((ix + lp[0]) * h)
            ys_out.append(val)
        xs_out.append(math.nan)
        ys_out.append(math.nan)
    return xs_out, ys_out


def write_profile_svg(path: Path, setup, result, log_scale=False):
    plot = LinePlot(title=f"{setup.problem.pid}: density profile",
                    xlabel="x", ylabel="density", ylog=log_scale)
    t0, tN = result.times[0], result.times[-1]
    for label, coeffs, t in ((f"{setup.scheme.kind} t={t0:g}", result.states[0], t0),
                             (f"{setup.scheme.kind} t={tN:g}", result.states[-1], tN)):
        xs, ys = _profile_series(setup.disc, coeffs)
        plot.add(label, xs, ys)
    xs = np.linspace(0.0, 1.0, 513)
    if setup.disc.dim == 1:
        pts = xs[:, None]
    else:
        pts = np.stack([xs, np.full_like(xs, 0.5)], axis=1)
    tracer = CharacteristicTracer(setup.problem, pts)
    tracer.advance(tN)
    plot.add(f"exact t={tN:g}", xs, tracer.density())
    plot.write(path)


# -- subcommands ----------------------------------------------------------------


def cmd_run(args) -> int:
    settings = resolve_experiment(args)
    setup = _build_from_settings(settings)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    from .metrics import ErrorEvaluator
    from .timestepping import integrate

    result = integrate(setup.op, setup.r0, setup.time_config)
    write_meta(outdir / "meta.txt", setup, settings, result)
    write_trajectory(outdir / "trajectory.csv", result, setup.disc.n_loc)
    if not args.no_errors:
        evaluator = ErrorEvaluator(setup.disc, setup.problem)
        counts = result.limiter_counts_per_sample()
        reports = [evaluator.report(DensityState(setup.disc, c), t, counts[k])
                   for k, (t, c) in enumerate(zip(result.times, result.states))]
        write_errors(outdir / "errors.csv", reports)
        if reports:
            worst = min(rep.min_density for rep in reports)
            print(f"min density over samples: {worst:.6e}")
    if not args.no_plot:
        write_profile_svg(outdir / "profile.svg", setup, result)
    if not result.completed:
        f = result.failure
        print(f"positivity lost: cell {f.cell}, t={f.t:.6g}"
              + (f", stage {f.stage}" if f.stage else ""))
        print(f"partial outputs written to {outdir}")
        return EXIT_POSITIVITY
    print(f"completed {result.n_steps} steps to t={result.times[-1]:g}; "
          f"outputs in {outdir}")
    return EXIT_OK


def cmd_converge(args) -> int:
    settings = resolve_experiment(args)
    spec = settings["problem_spec"]
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    for s in schemes:
        if s not in SCHEME_KINDS:
            raise ConfigError(f"unknown scheme {s!r}")
    if args.m_list:
        m_list = [int(v) for v in args.m_list.split(",")]
    else:
        m_list = list(spec.convergence_m)
    if not m_list:
        raise ConfigError("no resolutions given (use --m-list)")
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    overrides = {k: settings[k] for k in ("p", "cfl", "n_q", "t_final",
                                          "sample_interval", "velocity_mode", "backend")
                 if settings.get(k) is not None}
    all_rows = {}
    for scheme in schemes:
        rows = convergence_table(scheme, spec, m_list, **overrides)
        all_rows[scheme] = rows
        for row in rows:
            print(f"{scheme:8s} m={row.m:5d} "
                  + (f"L1={row.l1:.4e} L2={row.l2:.4e} KL={row.kl:.4e}"
                     if row.l1 is not None else f"failed: {row.failure}"))
    with open(outdir / "table.csv", "w") as fh:
        fh.write("scheme," + CONVERGENCE_HEADER + "\n")
        for scheme, rows in all_rows.items():
            for row in rows:
                fh.write(f"{scheme}," + row.csv_row() + "\n")
    for metric, getter in (("L1", lambda r: r.l1), ("L2", lambda r: r.l2),
                           ("KL", lambda r: r.kl)):
        plot = LinePlot(title=f"{spec.pid}: mean {metric} error vs resolution",
                        xlabel="cells per axis", ylabel=f"mean {metric} error",
                        xlog=True, ylog=True)
        for scheme, rows in all_rows.items():
            xs = [r.m for r in rows if r.l1 is not None]
            ys = [getter(r) for r in rows if r.l1 is not None]
            if xs:
                plot.add(scheme, xs, ys, marker=True)
        try:
            plot.write(outdir / f"convergence_{metric}.svg")
        except ValueError:
            pass  # nothing finite to plot (e.g. all-inf KL columns)
    print(f"table written to {outdir / 'table.csv'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .basis import BasisSpec
    from .mesh import MeshSpec, build_mesh
    from .operators import Discretization

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    failures = []

    def check(name, ok, detail):
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name}: {detail}")
        if not ok:
            failures.append(name)

    # 1) MLE consistency on the mild-compression geometry (m=8, p=1)
    ex1 = get_problem("ex1")
    mesh = build_mesh(MeshSpec(1, 8))
    disc = Discretization(mesh, BasisSpec(1), n_q=11)
    state = DensityState.from_function(disc, ex1.initial_density)
    dts = [1e-2 / 2 ** k for k in range(14)]
    res = consistency_check(disc, state, cell=2, velocity=ex1.velocity, dt_list=dts)
    with open(outdir / "mle_consistency.csv", "w") as fh:
        fh.write(CONSISTENCY_HEADER + "\n")
        for line in res.csv_rows():
            fh.write(line + "\n")
    check("mle slope", 0.8 <= res.slope <= 1.2, f"slope={res.slope:.3f}")
    tol = 1e-4 * res.rhs_inf_norm
    check("mle smallest-dt", res.discrepancies[-1] <= tol,
          f"discrepancy={res.discrepancies[-1]:.3e} tol={tol:.3e}")

    # 2) constant state with constant velocity: projection is exact
    ex3 = get_problem("ex3")
    disc_c = Discretization(build_mesh(MeshSpec(1, 8)), BasisSpec(1), n_q=11)
    state_c = DensityState.from_function(disc_c, lambda p: np.full(p.shape[:-1], 2.0))
    res_c = consistency_check(disc_c, state_c, cell=3, velocity=ex3.velocity,
                              dt_list=[1e-2, 5e-3, 2.5e-3])
    check("mle constant state", max(res_c.discrepancies) <= 1e-10,
          f"max discrepancy={max(res_c.discrepancies):.3e}")

    # 3) KL-growth identity on a smooth Fisher-Rao DG state (the exact
    # density follows the analytic field, so the scheme side must too)
    from .experiments import run_experiment
    run = run_experiment(ex1, "dfrg", m=32, t_final=0.5, sample_interval=0.25,
                         with_errors=False, backend=args.backend,
                         velocity_mode="analytic")
    t = run.integration.times[-1]
    state_d = run.integration.final_state(run.setup.disc)
    rdot = dfrg_rhs(state_d, ex1.velocity, velocity_mode="analytic")
    rng = np.random.default_rng(7)
    probes = [np.zeros_like(state_d.coeffs), state_d.coeffs.copy(),
              rng.normal(size=state_d.coeffs.shape)]
    diag = kl_growth_diagnostic(state_d, rdot, ex1, t, probes, fd_delta=2e-3)
    with open(outdir / "kl_diagnostic.csv", "w") as fh:
        fh.write("probe,expression,fd_dkl_dt\n")
        for k, v in enumerate(diag.expression_values):
            fh.write(f"{k},{v!r},{diag.fd_dkl_dt!r}\n")
    check("kl probe spread", diag.spread <= 1e-8, f"spread={diag.spread:.3e}")
    fd_tol = max(1e-6, 5.0 * diag.fd_delta ** 2)
    err = abs(diag.expression_values[0] - diag.fd_dkl_dt)
    check("kl vs finite difference", err <= fd_tol,
          f"|expr-fd|={err:.3e} tol={fd_tol:.3e}")

    return EXIT_TOLERANCE if failures else EXIT_OK


def _read_meta(path: Path) -> dict:
    if not path.exists():
        raise SchemaError(f"missing metadata file {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    return dict(parser["experiment"])


def _read_csv(path: Path, expected_header: str) -> list[list[str]]:
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    with open(path) as fh:
        header = fh.readline().strip()
        if header != expected_header:
            raise SchemaError(f"{path}: expected header {expected_header!r}, "
                              f"found {header!r}")
        return [line.strip().split(",") for line in fh if line.strip()]


def cmd_plot(args) -> int:
    if not args.inputs:
        raise ConfigError("no input files given")
    out = Path(args.out)
    metric = args.metric.upper()
    if args.kind in ("profile", "profile_log"):
        plot = LinePlot(xlabel="x", ylabel="density", ylog=args.kind == "profile_log")
        for inp in args.inputs:
            path = Path(inp)
            rows = _read_csv(path, TRAJECTORY_HEADER)
            meta = _read_meta(path.parent / "meta.txt")
            disc = _disc_from_meta(meta)
            times = sorted({float(r[0]) for r in rows})
            t_want = times[-1] if args.time is None else args.time
            t_sel = min(times, key=lambda t: abs(t - t_want))
            coeffs = np.zeros(disc.n_cells * disc.n_loc)
            for r in rows:
                if float(r[0]) == t_sel:
                    coeffs[int(r[1]) * disc.n_loc + int(r[2])] = float(r[3])
            xs, ys = _profile_series(disc, coeffs)
            plot.add(f"{meta['scheme']} t={t_sel:g}", xs, ys)
            plot.title = f"{meta['problem']}: density profile"
            if args.exact:
                spec = get_problem(meta["problem"])
                xs = np.linspace(0.0, 1.0, 513)
                pts = xs[:, None] if disc.dim == 1 else \
                    np.stack([xs, np.full_like(xs, 0.5)], axis=1)
                tracer = CharacteristicTracer(spec, pts)
                tracer.advance(t_sel)
                plot.add(f"exact t={t_sel:g}", xs, tracer.density())
                args.exact = False  # one exact curve is enough
    elif args.kind == "error_time":
        col = {"L1": 1, "L2": 2, "KL": 3}[metric]
        plot = LinePlot(title=f"{metric} error over time", xlabel="t",
                        ylabel=f"{metric} error", ylog=True)
        for inp in args.inputs:
            path = Path(inp)
            rows = _read_csv(path, CSV_HEADER)
            meta = _read_meta(path.parent / "meta.txt")
            ts = [float(r[0]) for r in rows]
            vals = [float(r[col]) for r in rows]
            plot.add(meta["scheme"], ts, vals)
    elif args.kind == "convergence":
        col = {"L1": 3, "L2": 5, "KL": 7}[metric]
        plot = LinePlot(title=f"mean {metric} error vs resolution",
                        xlabel="cells per axis", ylabel=f"mean {metric} error",
                        xlog=True, ylog=True)
        series: dict[str, tuple[list, list]] = {}
        for inp in args.inputs:
            rows = _read_csv(Path(inp), "scheme," + CONVERGENCE_HEADER)
            for r in rows:
                if r[col]:
                    xs, ys = series.setdefault(r[0], ([], []))
                    xs.append(float(r[1]))
                    ys.append(float(r[col]))
        for label, (xs, ys) in series.items():
            plot.add(label, xs, ys, marker=True)
    else:
        raise ConfigError(f"unknown plot kind {args.kind!r}")
    plot.write(out)
    print(f"wrote {out}")
    return EXIT_OK


def _disc_from_meta(meta: dict):
    from .basis import BasisSpec
    from .mesh import MeshSpec, build_mesh
    from .operators import Discretization

    try:
        dim, p, m, n_q = (int(meta[k]) for k in ("dim", "p", "m", "n_q"))
    except KeyError as exc:
        raise SchemaError(f"metadata missing key {exc}") from None
    return Discretization(build_mesh(MeshSpec(dim, m)), BasisSpec(p), n_q)


def cmd_list(args) -> int:
    problems = registered_problems()
    backend = get_backend(args.backend if hasattr(args, "backend") else None)
    print(f"kernel backend: {backend.name}")
    print(f"{'id':10s} {'dim':3s} {'p':2s} {'m':5s} {'CFL':9s} {'T':6s} description")
    for pid, spec in sorted(problems.items()):
        print(f"{pid:10s} {spec.dim:<3d} {spec.p:<2d} {spec.m:<5d} "
              f"{spec.cfl:<9g} {spec.t_final:<6g} {spec.description}")
        for note in spec.notes:
            print(f"{'':10s} note: {note}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--scheme", choices=SCHEME_KINDS, default=None)
    p.add_argument("--flux", choices=FLUX_KINDS, default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="Lax-Friedrichs dissipation (default: local max |u.nu|)")
    p.add_argument("--p", type=int, default=None, help="polynomial order")
    p.add_argument("--m", type=int, default=None, help="cells per axis")
    p.add_argument("--cfl", type=float, default=None)
    p.add_argument("--nq", dest="n_q", type=int, default=None,
                   help="quadrature points per axis")
    p.add_argument("--t-final", dest="t_final", type=float, default=None)
    p.add_argument("--sample-interval", dest="sample_interval", type=float, default=None)
    p.add_argument("--limiter-mode", dest="limiter_mode", choices=LIMITER_MODES,
                   default=None)
    p.add_argument("--limiter-eps", dest="limiter_eps", type=float, default=None)
    p.add_argument("--velocity-mode", dest="velocity_mode",
                   choices=("nodal", "analytic"), default=None)
    p.add_argument("--backend", choices=("python", "compiled", "auto"), default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fisherdg",
                                 description="Positivity-preserving transport "
                                             "solvers (DG / Fisher-Rao DG)")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("experiment", help="registered problem id or config file path")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--no-errors", action="store_true",
                       help="skip the oracle-based error reports")
    p_run.add_argument("--no-plot", action="store_true")
    _add_run_flags(p_run)
    p_run.set_defaults(fn=cmd_run)

    p_conv = sub.add_parser("converge", help="grid-refinement study")
    p_conv.add_argument("experiment")
    p_conv.add_argument("--out", required=True)
    p_conv.add_argument("--schemes", default="dg,dg_plus,dfrg",
                        help="comma-separated scheme list")
    p_conv.add_argument("--m-list", dest="m_list", default=None,
                        help="comma-separated resolutions (default: registry)")
    _add_run_flags(p_conv)
    p_conv.set_defaults(fn=cmd_converge)

    p_or = sub.add_parser("oracle", help="run the projection/KL oracle suites")
    p_or.add_argument("--out", required=True)
    p_or.add_argument("--backend", choices=("python", "compiled", "auto"), default=None)
    p_or.set_defaults(fn=cmd_oracle)

    p_plot = sub.add_parser("plot", help="render SVG plots from run outputs")
    p_plot.add_argument("--kind", required=True,
                        choices=("profile", "profile_log", "error_time", "convergence"))
    p_plot.add_argument("--inputs", nargs="+", default=[],
                        help="input CSV files (trajectory/errors/table)")
    p_plot.add_argument("--out", required=True)
    p_plot.add_argument("--time", type=float, default=None,
                        help="sample time for profile plots (default: last)")
    p_plot.add_argument("--metric", choices=("l1", "l2", "kl", "L1", "L2", "KL"),
                        default="l2")
    p_plot.add_argument("--exact", action="store_true",
                        help="overlay the exact solution on profile plots")
    p_plot.set_defaults(fn=cmd_plot)

    p_list = sub.add_parser("list", help="dump the experiment registry")
    p_list.set_defaults(fn=cmd_list)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PositivityLost as exc:
        print(f"positivity failure: {exc}", file=sys.stderr)
        return EXIT_POSITIVITY


if __name__ == "__main__":
    sys.exit(main())
