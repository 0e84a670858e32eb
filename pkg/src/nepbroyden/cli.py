"""Benchmark harness: run solvers, emit convergence CSVs, compare, report.

Exit codes: 0 converged, 1 solver error, 2 ran but did not converge,
64 usage error, 65 unreadable or malformed history data.
"""

import argparse
import dataclasses
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import problems
from .broyden import BroydenBreakdown, SolverOptions, build_nep_system, solve_generic
from .config import read_flat_config
from .core import DeflationContext
from .deflation import deflated_broyden
from .history import ConvergenceHistory
from .linalg import eig_smallest, lu_solve
from .resinv import resinv_solve
from .structured import init_structured, solve_structured

EXIT_OK = 0
EXIT_SOLVER_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

METHODS = ("J", "H", "T", "resinv", "deflated")
PROBLEM_NAMES = ("diag-toy", "qep", "qdep", "dep-double", "tpdde-scalar",
                 "milling-1dof", "milling-pde")
C_CHOICES = ("ones-normalized", "e1", "random-seeded")

# problem parameters settable through --config, by problem name
_MILLING_KEYS = tuple(f.name for f in dataclasses.fields(problems.MillingConfig)
                      if f.name != "p_matrix")
PROBLEM_PARAM_KEYS = {
    "diag-toy": (),
    "qep": ("n",),
    "qdep": ("n",),
    "dep-double": (),
    "tpdde-scalar": ("a", "b", "tau", "scheme"),
    "milling-1dof": _MILLING_KEYS,
    "milling-pde": _MILLING_KEYS,
}


@dataclass
class RunConfig:
    problem: str = "qdep"
    method: str = "T"
    sigma: complex = 0j
    c_choice: str = "ones-normalized"
    tol: float | None = None     # None -> 1e-10 double, 1e-5 single
    maxit: int = 200
    damping: float = 1.0
    p_target: int = 3
    seed: int = 0
    precision: str = "double"
    ode_steps: int = 100
    ode_steps_coarse: int = 7
    output: str = "history.csv"
    plot: bool = False
    problem_params: dict = field(default_factory=dict)

    def validate(self):
        if self.problem not in PROBLEM_NAMES:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.c_choice not in C_CHOICES:
            raise ValueError(f"unknown c-choice {self.c_choice!r}")
        if self.precision not in ("single", "double"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.tol is not None and not self.tol >= 0:
            raise ValueError("tol must be nonnegative")
        if self.maxit < 1:
            raise ValueError("maxit must be positive")
        if not self.damping > 0:
            raise ValueError("damping threshold must be positive")
        if self.p_target < 1:
            raise ValueError("p must be positive")
        if self.ode_steps < 1 or self.ode_steps_coarse < 1:
            raise ValueError("ode steps must be positive")
        allowed = PROBLEM_PARAM_KEYS[self.problem]
        for key in self.problem_params:
            if key not in allowed:
                raise ValueError(
                    f"parameter {key!r} not understood by problem {self.problem!r}")

    @property
    def effective_tol(self):
        if self.tol is not None:
            return self.tol
        return 1e-5 if self.precision == "single" else 1e-10

    def solver_options(self):
        return SolverOptions(tol=self.effective_tol, maxit=self.maxit,
                             damping=self.damping, sigma=self.sigma)


_RUN_KEY_TYPES = {
    "problem": str, "method": str, "sigma": complex, "c_choice": str,
    "tol": float, "maxit": int, "damping": float, "p_target": int,
    "seed": int, "precision": str, "ode_steps": int,
    "ode_steps_coarse": int, "output": str,
}


def apply_config_file(cfg, path):
    """Flat key = value assignments; run options by field name, everything
    else routed to the problem builder. File values win over flags."""
    for key, raw in read_flat_config(path).items():
        key = key.replace("-", "_")
        if key in _RUN_KEY_TYPES:
            try:
                setattr(cfg, key, _RUN_KEY_TYPES[key](raw))
            except ValueError:
                raise ValueError(f"bad value for {key!r}: {raw!r}") from None
        else:
            cfg.problem_params[key] = raw
    return cfg


def build_problem(cfg):
    dtype = np.complex64 if cfg.precision == "single" else np.complex128
    params = cfg.problem_params
    name = cfg.problem
    if name == "diag-toy":
        return problems.make_diag_toy(dtype=dtype)
    if name == "qep":
        return problems.make_random_qep(n=int(params.get("n", 30)),
                                        seed=cfg.seed, dtype=dtype)
    if name == "qdep":
        return problems.make_qdep(n=int(params.get("n", 40)),
                                  seed=cfg.seed, dtype=dtype)
    if name == "dep-double":
        return problems.make_dep_double(dtype=dtype)
    if name == "tpdde-scalar":
        return problems.make_tpdde_scalar(
            a=float(params.get("a", 1.0)), b=float(params.get("b", 0.0)),
            tau=float(params.get("tau", 1.0)), steps=cfg.ode_steps,
            scheme=params.get("scheme", "rk4"), dtype=dtype)
    mc_kwargs = {"steps": cfg.ode_steps}
    for key, raw in params.items():
        if key in ("steps", "n_space"):
            mc_kwargs[key] = int(raw)
        elif key in ("scheme", "dxx_scale"):
            mc_kwargs[key] = str(raw)
        else:
            mc_kwargs[key] = float(raw)
    mc = problems.MillingConfig(**mc_kwargs)
    if name == "milling-1dof":
        return problems.make_milling_1dof(mc)
    return problems.make_milling_pde(mc)


def choose_c(cfg, n, dtype):
    if cfg.c_choice == "ones-normalized":
        return np.ones(n, dtype=dtype) / np.sqrt(n)
    if cfg.c_choice == "e1":
        c = np.zeros(n, dtype=dtype)
        c[0] = 1.0
        return c
    rng = np.random.default_rng(cfg.seed)
    c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)).astype(dtype)
    return c / np.linalg.norm(c)


def _shift_matrix(nep, cfg, sigma):
    """M(sigma) assembled exactly, or the coarse stepper surrogate."""
    if nep.has_assemble:
        return np.asarray(nep.assemble(sigma))
    return problems.approx_matrix(nep, sigma, cfg.ode_steps_coarse)


def _normalized_start(m1, c):
    _, v0 = eig_smallest(m1)
    alpha = np.vdot(c, v0)
    if abs(alpha) < 1e-12 * np.linalg.norm(v0):
        raise ValueError("normalization vector orthogonal to candidate")
    return v0 / alpha


def _initial_jacobian(nep, m1, c, v1, sigma):
    n = nep.n
    w = nep.deriv_action(sigma, v1)
    j0 = np.zeros((n + 1, n + 1), dtype=np.result_type(m1, w))
    j0[:n, :n] = m1
    j0[:n, n] = w
    j0[n, :n] = np.conj(c)
    return j0


def run_benchmark(cfg, nep=None):
    """Solve per cfg; returns (history, converged, info dict)."""
    if nep is None:
        nep = build_problem(cfg)
    opts = cfg.solver_options()
    sigma = complex(cfg.sigma)
    c = choose_c(cfg, nep.n, nep.dtype)
    m1 = _shift_matrix(nep, cfg, sigma)
    if cfg.method == "resinv":
        r = resinv_solve(nep, c, sigma, opts=opts, M_sigma=m1)
        return r.history, r.converged, {"lambda": r.lam}
    if cfg.method == "deflated":
        r = deflated_broyden(nep, sigma, c, cfg.p_target, opts=opts, M1=m1,
                             seed=cfg.seed)
        return (r.merged_history(), r.converged,
                {"eigenvalues": list(r.eigenvalues), "retries": r.retries})
    v1 = _normalized_start(m1, c)
    if cfg.method == "T":
        t1 = lu_solve(m1, np.eye(nep.n, dtype=m1.dtype))
        w1 = nep.deriv_action(sigma, v1)[:, None]
        ctx = DeflationContext(n=nep.n, dtype=nep.dtype)
        b2 = np.ones(1, dtype=np.result_type(c))
        state = init_structured(nep, ctx, v1, np.zeros(0, dtype=v1.dtype),
                                sigma, t1, w1, c, b2)
        r = solve_structured(state, nep, ctx, opts)
        return (r.history, r.converged,
                {"lambda": r.lam,
                 "max_constraint_violation": r.max_constraint_violation})
    sys_f = build_nep_system(nep, c)
    x0 = sys_f.join(v1, np.zeros(0, dtype=v1.dtype), sigma)
    j0 = _initial_jacobian(nep, m1, c, v1, sigma)
    if cfg.method == "J":
        r = solve_generic(sys_f, x0, J0=j0, opts=opts)
    else:
        h0 = lu_solve(j0, np.eye(nep.n + 1, dtype=j0.dtype))
        r = solve_generic(sys_f, x0, H0=h0, opts=opts)
    return r.history, r.converged, {"lambda": r.lam}


def _fmt_lambda(lam):
    return f"{lam.real:.12g}{lam.imag:+.12g}j"


def cmd_run(args):
    cfg = RunConfig(
        problem=args.problem, method=args.method, sigma=args.sigma,
        c_choice=args.c_choice, tol=args.tol, maxit=args.maxit,
        damping=args.damping, p_target=args.p, seed=args.seed,
        precision=args.precision, ode_steps=args.ode_steps,
        ode_steps_coarse=args.ode_steps_coarse, output=args.output,
        plot=args.plot)
    try:
        if args.config:
            apply_config_file(cfg, args.config)
        cfg.validate()
        nep = build_problem(cfg)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        hist, converged, info = run_benchmark(cfg, nep)
    except (BroydenBreakdown, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    try:
        hist.write_csv(cfg.output)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    status = "converged" if converged else "not converged"
    print(f"problem={cfg.problem} method={cfg.method} sigma={cfg.sigma} "
          f"precision={cfg.precision} actions={nep.actions}")
    if "eigenvalues" in info:
        eigs = ", ".join(_fmt_lambda(e) for e in info["eigenvalues"])
        print(f"{status}: {len(info['eigenvalues'])} eigenvalue(s) [{eigs}] "
              f"in {len(hist)} recorded iterations")
    elif len(hist):
        print(f"{status} after {hist.k[-1]} iterations: "
              f"lambda = {_fmt_lambda(hist.lam[-1])}, "
              f"residual = {hist.residual[-1]:.3e}")
    else:
        print(status)
    print(f"wrote {cfg.output}")
    if cfg.plot:
        from .plotting import render_histories
        png = os.path.splitext(cfg.output)[0] + ".png"
        render_histories([(os.path.basename(cfg.output), hist)], png)
        print(f"wrote {png}")
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _load_histories(paths):
    entries = []
    for path in paths:
        entries.append((path, ConvergenceHistory.read_csv(path)))
    return entries


def print_comparison(entries, out):
    """Summary block plus per-iteration eigenvalue differences vs the first
    file. Returns an exit code (EXIT_DATA when iteration ranges are disjoint)."""
    name_w = max(max(len(p) for p, _ in entries), 4)
    out.write(f"{'file':<{name_w}}  {'iters':>5}  {'final_residual':>14}  "
              f"{'final_lambda':>32}  {'total_wall_s':>12}\n")
    for path, hist in entries:
        if len(hist) == 0:
            out.write(f"{path:<{name_w}}  empty\n")
            continue
        out.write(f"{path:<{name_w}}  {hist.k[-1]:>5}  "
                  f"{hist.residual[-1]:>14.6e}  "
                  f"{_fmt_lambda(hist.lam[-1]):>32}  {hist.wall[-1]:>12.3f}\n")
    ref_path, ref = entries[0]
    ref_by_k = dict(zip(ref.k, ref.lam))
    others = []
    for path, hist in entries[1:]:
        by_k = dict(zip(hist.k, hist.lam))
        shared = sorted(set(ref_by_k) & set(by_k))
        if not shared:
            out.write(f"error: no overlapping iterations between "
                      f"{ref_path!r} and {path!r}\n")
            return EXIT_DATA
        others.append((path, by_k, shared))
    out.write(f"\nper-iteration |lambda - lambda_ref|  (reference: {ref_path})\n")
    all_k = sorted(set().union(*(set(s) for _, _, s in others)))
    out.write(f"{'k':>5}  " + "  ".join(f"{p:>{max(len(p), 12)}}"
                                        for p, _, _ in others) + "\n")
    for k in all_k:
        cells = []
        for path, by_k, _ in others:
            w = max(len(path), 12)
            if k in by_k:
                cells.append(f"{abs(by_k[k] - ref_by_k[k]):>{w}.6e}")
            else:
                cells.append(" " * w)
        out.write(f"{k:>5}  " + "  ".join(cells) + "\n")
    for path, by_k, shared in others:
        dmax = max(abs(by_k[k] - ref_by_k[k]) for k in shared)
        out.write(f"max |dlambda| vs reference for {path}: {dmax:.6e}\n")
    return EXIT_OK


def cmd_compare(args):
    try:
        entries = _load_histories(args.files)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return print_comparison(entries, sys.stdout)


def cmd_report(args):
    try:
        entries = _load_histories(args.files)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    if len(entries) > 1:
        code = print_comparison(entries, sys.stdout)
        if code != EXIT_OK:
            return code
    png = args.output or os.path.splitext(args.files[0])[0] + ".png"
    from .plotting import render_histories
    labeled = [(os.path.basename(p), h) for p, h in entries]
    try:
        render_histories(labeled, png, target=args.target)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    print(f"wrote {png}")
    return EXIT_OK


def _complex_arg(text):
    return complex(text.replace(" ", ""))


class _Parser(argparse.ArgumentParser):
    """argparse that exits with the usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="nepbroyden",
                     description="Benchmark harness for damped Broyden "
                                 "nonlinear eigensolvers.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve one problem and write a history CSV")
    run.add_argument("--problem", choices=PROBLEM_NAMES, default="qdep")
    run.add_argument("--method", choices=METHODS, default="T")
    run.add_argument("--sigma", type=_complex_arg, default=0j,
                     help="shift / target, complex literal like 0.5+8j")
    run.add_argument("--c-choice", dest="c_choice", choices=C_CHOICES,
                     default="ones-normalized")
    run.add_argument("--tol", type=float, default=None,
                     help="residual tolerance (default 1e-10 double, 1e-5 single)")
    run.add_argument("--maxit", type=int, default=200)
    run.add_argument("--damping", type=float, default=1.0,
                     help="max step norm before damping kicks in (inf disables)")
    run.add_argument("--p", type=int, default=3,
                     help="eigenvalues to lock (deflated method)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--precision", choices=("single", "double"),
                     default="double")
    run.add_argument("--ode-steps", dest="ode_steps", type=int, default=100,
                     help="time steps for the stepper-defined problems")
    run.add_argument("--ode-steps-coarse", dest="ode_steps_coarse", type=int,
                     default=7, help="time steps for the coarse shift matrix")
    run.add_argument("--output", "-o", default="history.csv")
    run.add_argument("--config", default=None,
                     help="flat key = value file; overrides flags, extra keys "
                          "go to the problem builder")
    run.add_argument("--plot", action="store_true",
                     help="also render the history to PNG next to the CSV")
    run.set_defaults(func=cmd_run)

    comp = sub.add_parser("compare", help="tabulate two or more history CSVs")
    comp.add_argument("files", nargs="+")
    comp.set_defaults(func=cmd_compare)

    rep = sub.add_parser("report", help="render history CSVs to a PNG figure")
    rep.add_argument("files", nargs="+")
    rep.add_argument("--output", "-o", default=None,
                     help="PNG path (default: first CSV with .png suffix)")
    rep.add_argument("--target", type=_complex_arg, default=None,
                     help="known eigenvalue for an error panel")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "compare" and len(args.files) < 2:
        parser.error("compare needs at least two history files")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
