"""CLI entrypoint for ncgmomentum."""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .composite import (
    CompositeAlgorithm,
    CompositeProblem,
    CompositeSolverSpec,
    is_convergent,
    run_solver,
    stationarity_residual,
    tune_delta,
    tune_lambda,
)
from .constants import (
    CONFIG_ECHO_NAME,
    DEFAULT_COLS,
    DEFAULT_GDM_BETA,
    DEFAULT_LAMBDA,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_QUAD_ALPHA,
    DEFAULT_QUAD_ITERS,
    DEFAULT_QUAD_SIZE,
    DEFAULT_ROWS,
    DEFAULT_SEED,
    DEFAULT_SNR_DB,
    DEFAULT_SPARSE_ITERS,
    DEFAULT_SPARSITY,
    DEFAULT_VERIFY_ITERS,
    DEFAULT_VERIFY_SEED,
    DEFAULT_VERIFY_SIZE,
    EXIT_GENERATION,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VIOLATION,
    LAMBDA_TUNING_DELTA,
    OUTPUT_DIR_ENV,
    PLOT_COLUMNS,
    PRNG_NAME,
    SUMMARY_NAME,
    TRACE_SCHEMA_VERSION,
    TUNING_GRID,
)
from .diagnostics import (
    PlotError,
    Trace,
    TraceIOError,
    read_trace_csv,
    render_svg_plot,
    write_bound_csv,
    write_trace_csv,
)
from .linalg import svd_spectrum
from .problems import (
    ConstructionError,
    ProblemFamily,
    ProblemRecipe,
    build_quadratic,
    build_sparse_instance,
    random_spd_quadratic,
    short_fingerprint,
)
from .prox import RegularizerKind
from .smooth import (
    MomentumKind,
    NotPositiveDefiniteError,
    SmoothAlgorithm,
    SmoothSolverSpec,
    StepMode,
    run_smooth,
    verify_theorem1,
)
from .utils import atomic_write_text, format_float, normalise_label

logger = logging.getLogger(__name__)


# ANSI codes for minimal styling
DIM = "\033[2m"
BOLD = "\033[1m"
RESET = "\033[0m"
YELLOW = "\033[33m"
GREEN = "\033[32m"
RED = "\033[31m"

_QUAD_FAMILIES = {
    "gd": (SmoothAlgorithm.GD, MomentumKind.FR),
    "gdm": (SmoothAlgorithm.GDM, MomentumKind.FR),
    "nag": (SmoothAlgorithm.NAG, MomentumKind.FR),
    "frgd": (SmoothAlgorithm.FRGD, MomentumKind.FR),
    "prgd": (SmoothAlgorithm.FRGD, MomentumKind.PR),
    "hsgd": (SmoothAlgorithm.FRGD, MomentumKind.HS),
    "dygd": (SmoothAlgorithm.FRGD, MomentumKind.DY),
}
QUAD_SOLVERS = ("sd",) + tuple(f"{name}-{mode.value}" for name in _QUAD_FAMILIES for mode in StepMode)
DEFAULT_QUAD_SOLVERS = "gd-fx,gdm-fx,nag-fx,frgd-fx,gd-ls,gdm-ls,nag-ls,frgd-ls"

SPARSE_SOLVERS = {
    "ista": (CompositeAlgorithm.ISTA, MomentumKind.FR),
    "fista": (CompositeAlgorithm.FISTA, MomentumKind.FR),
    "apg": (CompositeAlgorithm.APG, MomentumKind.FR),
    "frprox": (CompositeAlgorithm.MOMENTUM_PROX, MomentumKind.FR),
    "prprox": (CompositeAlgorithm.MOMENTUM_PROX, MomentumKind.PR),
    "hsprox": (CompositeAlgorithm.MOMENTUM_PROX, MomentumKind.HS),
    "dyprox": (CompositeAlgorithm.MOMENTUM_PROX, MomentumKind.DY),
    "dca": (CompositeAlgorithm.DCA, MomentumKind.FR),
}
DEFAULT_SPARSE_SOLVERS = "fista,apg,frprox"


class UsageError(Exception):
    """Raised for invalid flag values; maps to exit code 2."""
    pass


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def print_header(title: str):
    """Print a minimal header."""
    print(f"\n{BOLD}{title}{RESET}")
    print(f"{DIM}{'─' * 40}{RESET}")


def print_status(message: str, status: str = "ok"):
    """Print a status line."""
    symbol = {"ok": f"{GREEN}✓{RESET}", "warn": f"{YELLOW}!{RESET}", "err": f"{RED}✗{RESET}"}.get(status, " ")
    print(f"  {symbol} {message}")


@dataclass
class RunConfig:
    """A parsed command with every flag resolved."""

    command: str
    options: Dict[str, Any]
    output_dir: Path
    extra: Dict[str, Any] = field(default_factory=dict)

    def echo(self) -> Dict[str, Any]:
        return {
            "version": __version__,
            "schema": TRACE_SCHEMA_VERSION,
            "prng": PRNG_NAME,
            "command": self.command,
            "options": self.options,
            **self.extra,
        }

    def write_echo(self) -> Path:
        path = self.output_dir / CONFIG_ECHO_NAME
        _write_json(path, self.echo())
        return path


def resolve_output_dir(flag: Optional[str]) -> Path:
    """--out, else $NCGMOMENTUM_OUTPUT_DIR, else ./results."""
    return Path(flag or os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def _make_config(args, command: str) -> RunConfig:
    options = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "command", "out", "verbose")
    }
    out = resolve_output_dir(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise TraceIOError(f"cannot create output directory {out}: {e}") from e
    return RunConfig(command=command, options=options, output_dir=out)


def _write_json(path: Path, doc: Dict[str, Any]) -> None:
    try:
        atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise TraceIOError(f"failed to write {path}: {e}") from e


def _split_names(text: str) -> List[str]:
    names = [name.strip().lower() for name in text.split(",") if name.strip()]
    if not names:
        raise UsageError("no solvers given")
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate solver names in {text!r}")
    return names


def _parse_positive(text: str, flag: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise UsageError(f"{flag}: expected a number, got {text!r}") from None
    if not value > 0:
        raise UsageError(f"{flag} must be positive, got {text}")
    return value


def quad_solver_spec(
    name: str,
    alpha: float = DEFAULT_QUAD_ALPHA,
    beta: float = DEFAULT_GDM_BETA,
    iters: int = DEFAULT_QUAD_ITERS,
    record_every: int = 1,
    keep_iterates: bool = False,
) -> SmoothSolverSpec:
    """
    Spec for a quadratic solver name such as "frgd-fx" or "sd".

    Raises:
        UsageError: If name is unknown or the values are invalid
    """
    if name not in QUAD_SOLVERS:
        raise UsageError(f"unknown solver {name!r} (valid: {', '.join(QUAD_SOLVERS)})")
    try:
        if name == "sd":
            return SmoothSolverSpec(
                algorithm=SmoothAlgorithm.SD, step_mode=StepMode.LINE_SEARCH,
                max_iters=iters, record_every=record_every, keep_iterates=keep_iterates,
            )
        family, mode = name.rsplit("-", 1)
        algorithm, kind = _QUAD_FAMILIES[family]
        return SmoothSolverSpec(
            algorithm=algorithm,
            step_mode=StepMode(mode),
            alpha=alpha,
            momentum_beta=beta if algorithm is SmoothAlgorithm.GDM else None,
            momentum_kind=kind,
            max_iters=iters,
            record_every=record_every,
            keep_iterates=keep_iterates,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def sparse_solver_spec(
    name: str,
    delta: float,
    iters: int = DEFAULT_SPARSE_ITERS,
    record_every: int = 1,
    stop_tol: float = 0.0,
    cap_beta: bool = False,
) -> CompositeSolverSpec:
    """
    Spec for a sparse solver name such as "frprox" or "dca".

    Raises:
        UsageError: If name is unknown or the values are invalid
    """
    if name not in SPARSE_SOLVERS:
        raise UsageError(f"unknown solver {name!r} (valid: {', '.join(SPARSE_SOLVERS)})")
    algorithm, kind = SPARSE_SOLVERS[name]
    try:
        return CompositeSolverSpec(
            algorithm=algorithm,
            delta=delta,
            momentum_kind=kind,
            max_iters=iters,
            stop_tol=stop_tol,
            record_every=record_every,
            cap_beta=cap_beta,
        )
    except ValueError as e:
        raise UsageError(str(e)) from e


def _trace_path(config: RunConfig, trace: Trace) -> Path:
    return config.output_dir / f"{normalise_label(trace.label)}.csv"


def _plot(config: RunConfig, traces: Sequence[Trace], column: str) -> None:
    if not any(t.has_column(column) for t in traces):
        return
    _, values = zip(*(t.column(column) for t in traces))
    positive = all(v > 0 for series in values for v in series)
    path = config.output_dir / f"{column}.svg"
    render_svg_plot(traces, column, path, log_y=positive or column != "objective")
    print_status(f"{path.name}")


def _final_rel_error(trace: Trace) -> Optional[float]:
    _, values = trace.column("rel_error")
    return values[-1] if values else None


def cmd_quad(args) -> int:
    """Run smooth solvers on the circular-graph Laplacian quadratic."""
    if args.n < 3:
        raise UsageError(f"--n must be at least 3, got {args.n}")
    if args.iters < 1 or args.record_every < 1:
        raise UsageError("--iters and --record-every must be positive")
    specs = [
        quad_solver_spec(name, args.alpha, args.beta, args.iters, args.record_every)
        for name in _split_names(args.solvers)
    ]
    config = _make_config(args, "quad")
    recipe = ProblemRecipe(family=ProblemFamily.QUAD_LAPLACIAN, rows=args.n, cols=args.n, sparsity=1)
    problem = build_quadratic(recipe, centered=not args.raw)
    digest = recipe.fingerprint()
    config.extra["recipe"] = {**recipe.to_dict(), "centered": not args.raw, "fingerprint": digest}

    print_header(f"quad  n={args.n}  alpha={args.alpha:g}  iters={args.iters}")
    print(f"{DIM}recipe {short_fingerprint(digest)}  output {config.output_dir}{RESET}")

    traces = []
    summary: Dict[str, Any] = {}
    for spec in specs:
        trace = run_smooth(problem, spec)
        trace.meta["recipe"] = digest
        write_trace_csv(trace, _trace_path(config, trace))
        traces.append(trace)
        last = trace.rows[-1]
        summary[trace.label] = {
            "final_objective": trace.final_objective,
            "final_norm": last.norm,
            "final_rel_error": _final_rel_error(trace),
            "iterations": trace.iterations,
            "stop_reason": trace.stop_reason,
        }
        status = "warn" if trace.diverged else "ok"
        print_status(f"{trace.label:<10} |grad| {format_float(last.norm):<24} stop {trace.stop_reason}", status)

    _plot(config, traces, "objective")
    _plot(config, traces, "rel_error" if not args.raw else "norm")
    _write_json(config.output_dir / SUMMARY_NAME, {"recipe": digest, "solvers": summary})
    config.write_echo()
    return EXIT_OK


def _resolve_lambda(args) -> Optional[float]:
    if args.lam == "auto":
        if args.mode != "random":
            raise UsageError("--lambda auto is only available with --mode random")
        return None
    return _parse_positive(args.lam, "--lambda")


def cmd_sparse(args) -> int:
    """Build a sparse-recovery instance and compare the composite solvers."""
    reg = RegularizerKind.parse(args.reg)
    names = _split_names(args.solvers)
    lam = _resolve_lambda(args)
    sweep = args.delta == "sweep"
    delta = min(TUNING_GRID) if sweep else _parse_positive(args.delta, "--delta")
    if args.iters < 1 or args.record_every < 1:
        raise UsageError("--iters and --record-every must be positive")
    specs = [
        sparse_solver_spec(name, delta, args.iters, args.record_every, args.stop_tol, args.cap_beta)
        for name in names
    ]
    if reg is RegularizerKind.L1 and any(s.algorithm is CompositeAlgorithm.DCA for s in specs):
        raise UsageError("dca needs --reg l12")
    family = ProblemFamily.SPARSE_CONSTRUCTED if args.mode == "constructed" else ProblemFamily.SPARSE_RANDOM
    try:
        recipe = ProblemRecipe(
            family=family,
            rows=args.rows,
            cols=args.cols,
            sparsity=args.sparsity,
            snr_db=args.snr,
            lam=lam if lam is not None else DEFAULT_LAMBDA,
            seed=args.seed,
            reg=reg,
        )
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e
    config = _make_config(args, "sparse")

    print_header(f"sparse  {args.rows}x{args.cols}  reg={reg.value}  mode={args.mode}")
    instance = build_sparse_instance(recipe)
    problem: CompositeProblem = instance.problem
    if instance.attempts > 1:
        print_status(f"construction converged with seed {instance.seed_used} "
                     f"after {instance.attempts} attempts", "warn")

    lambda_sweep = None
    if lam is None:
        try:
            tuned = tune_lambda(problem.with_lambda, TUNING_GRID, LAMBDA_TUNING_DELTA, args.iters)
        except RuntimeError as e:
            raise ConstructionError(str(e)) from e
        problem = problem.with_lambda(tuned.best)
        lambda_sweep = {format_float(k): v for k, v in tuned.finals.items()}
        print_status(f"lambda tuned to {tuned.best:g}")

    used = instance.recipe.with_lambda(problem.lam)
    digest = used.fingerprint()
    config.extra["recipe"] = {**used.to_dict(), "fingerprint": digest, "attempts": instance.attempts}
    print(f"{DIM}recipe {short_fingerprint(digest)}  output {config.output_dir}{RESET}")

    traces = []
    summary: Dict[str, Any] = {}
    for spec in specs:
        entry: Dict[str, Any] = {}
        if sweep:
            result = tune_delta(problem, spec, TUNING_GRID)
            trace = result.trace
            entry["delta"] = result.best
            entry["sweep"] = {format_float(k): v for k, v in result.finals.items()}
        else:
            trace = run_solver(problem, spec)
            entry["delta"] = spec.delta
        trace.meta["recipe"] = digest
        write_trace_csv(trace, _trace_path(config, trace))
        traces.append(trace)
        ok = trace.final_x is not None and not trace.diverged
        entry.update({
            "final_objective": trace.final_objective,
            "final_rel_error": _final_rel_error(trace),
            "stationarity": stationarity_residual(problem, trace.final_x) if ok else None,
            "iterations": trace.iterations,
            "stop_reason": trace.stop_reason,
            "convergent": is_convergent(trace),
        })
        summary[trace.label] = entry
        status = "ok" if entry["convergent"] else "warn"
        rel = entry["final_rel_error"]
        print_status(f"{trace.label:<8} delta {entry['delta']:<8g} rel_error {format_float(rel):<24}", status)

    _plot(config, traces, "objective")
    _plot(config, traces, "rel_error")
    doc: Dict[str, Any] = {"recipe": digest, "lambda": problem.lam, "solvers": summary}
    if lambda_sweep is not None:
        doc["lambda_sweep"] = lambda_sweep
    if instance.construction is not None:
        doc["construction"] = {
            "residual": instance.construction.residual,
            "iterations": instance.construction.iterations,
        }
    _write_json(config.output_dir / SUMMARY_NAME, doc)
    config.write_echo()
    return EXIT_OK


def cmd_verify_bound(args) -> int:
    """Check fixed-step FRGD residuals against the convergence bound."""
    if args.n < 2:
        raise UsageError(f"--n must be at least 2, got {args.n}")
    if args.iters < 1:
        raise UsageError("--iters must be positive")
    try:
        problem = random_spd_quadratic(args.n, args.seed, singular=args.inject_singular)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.alpha == "auto":
        alpha = 1.0 / svd_spectrum(problem.A).spectral_norm
    else:
        alpha = _parse_positive(args.alpha, "--alpha")
    config = _make_config(args, "verify-bound")
    config.extra["alpha"] = alpha

    print_header(f"verify-bound  n={args.n}  seed={args.seed}  alpha={alpha:.6g}")
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD, alpha=alpha, max_iters=args.iters, keep_iterates=True)
    trace = run_smooth(problem, spec)
    write_trace_csv(trace, _trace_path(config, trace))
    try:
        report = verify_theorem1(problem, trace.iterates, alpha)
    except NotPositiveDefiniteError as e:
        config.write_echo()
        print_status(str(e), "err")
        return EXIT_GENERATION

    write_bound_csv(report, config.output_dir / "bound.csv")
    config.extra["kappa_A"] = report.kappa_A
    config.extra["rho"] = report.rho
    config.write_echo()
    if report.truncated_at is not None:
        print_status(f"Z lost full column rank at l={report.truncated_at}; rows stop there", "warn")
    if report.all_hold:
        print_status(f"bound holds at all {len(report.rows)} rows (kappa {report.kappa_A:.4g})")
        return EXIT_OK
    print_status(f"bound violated at l={report.violations}", "err")
    return EXIT_VIOLATION


def cmd_plot(args) -> int:
    """Re-render an SVG from stored trace CSVs."""
    try:
        traces = [read_trace_csv(path) for path in args.inputs]
    except TraceIOError as e:
        raise UsageError(str(e)) from e
    out = Path(args.out) if args.out else resolve_output_dir(None) / f"{args.column}.svg"
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        render_svg_plot(traces, args.column, out, log_y=args.log)
    except PlotError as e:
        raise UsageError(str(e)) from e
    print_status(f"{out} ({len(traces)} traces)")
    return EXIT_OK


def parse_args(argv: Optional[Sequence[str]] = None):
    """Parse command-line arguments."""
    parser = _ArgumentParser(
        prog="ncgmomentum",
        description="Fixed-step conjugate-gradient momentum benchmarks",
        epilog="""
examples:
  ncgmomentum quad --n 500 --alpha 0.3 --iters 3000
  ncgmomentum sparse --reg l1 --mode constructed --delta sweep --solvers fista,apg,frprox
  ncgmomentum sparse --reg l12 --mode random --snr 30 --lambda auto --solvers dca,apg,frprox
  ncgmomentum verify-bound --n 50 --seed 2 --alpha auto --iters 30
  ncgmomentum plot --inputs results/frgd-fx.csv results/gd-fx.csv --column norm
        """,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_ArgumentParser)
    sub.required = True

    quad = sub.add_parser("quad", help="Laplacian quadratic benchmark")
    quad.add_argument("--n", type=int, default=DEFAULT_QUAD_SIZE, help=f"graph size (default: {DEFAULT_QUAD_SIZE})")
    quad.add_argument("--alpha", type=float, default=DEFAULT_QUAD_ALPHA, help=f"fixed step (default: {DEFAULT_QUAD_ALPHA})")
    quad.add_argument("--beta", type=float, default=DEFAULT_GDM_BETA, help=f"GDM momentum (default: {DEFAULT_GDM_BETA})")
    quad.add_argument("--iters", type=int, default=DEFAULT_QUAD_ITERS, help=f"iterations (default: {DEFAULT_QUAD_ITERS})")
    quad.add_argument("--solvers", default=DEFAULT_QUAD_SOLVERS, help=f"comma list from: {', '.join(QUAD_SOLVERS)}")
    quad.add_argument("--record-every", type=int, default=1, metavar="K", help="record every K-th iteration")
    quad.add_argument("--raw", action="store_true", help="keep b = e_1 (no minimizer, no relative error)")
    quad.add_argument("--out", metavar="DIR", help=f"output directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})")
    quad.set_defaults(func=cmd_quad)

    sparse = sub.add_parser("sparse", help="sparse recovery benchmark")
    sparse.add_argument("--rows", type=int, default=DEFAULT_ROWS)
    sparse.add_argument("--cols", type=int, default=DEFAULT_COLS)
    sparse.add_argument("--sparsity", type=int, default=DEFAULT_SPARSITY)
    sparse.add_argument("--reg", choices=[k.value for k in RegularizerKind], default=RegularizerKind.L1.value)
    sparse.add_argument("--mode", choices=["constructed", "random"], default="constructed")
    sparse.add_argument("--snr", type=float, default=DEFAULT_SNR_DB, help="noise level in dB (random mode)")
    sparse.add_argument("--lambda", dest="lam", default=format_float(DEFAULT_LAMBDA), metavar="VALUE|auto")
    sparse.add_argument("--delta", default="sweep", metavar="VALUE|sweep", help="step size or per-solver sweep")
    sparse.add_argument("--solvers", default=DEFAULT_SPARSE_SOLVERS, help=f"comma list from: {', '.join(SPARSE_SOLVERS)}")
    sparse.add_argument("--iters", type=int, default=DEFAULT_SPARSE_ITERS)
    sparse.add_argument("--seed", type=int, default=DEFAULT_SEED)
    sparse.add_argument("--stop-tol", type=float, default=0.0, help="relative iterate change to stop at")
    sparse.add_argument("--cap-beta", action="store_true", help="clip momentum-prox beta at 1")
    sparse.add_argument("--record-every", type=int, default=1, metavar="K")
    sparse.add_argument("--out", metavar="DIR")
    sparse.set_defaults(func=cmd_sparse)

    verify = sub.add_parser("verify-bound", help="check the FRGD convergence bound")
    verify.add_argument("--n", type=int, default=DEFAULT_VERIFY_SIZE)
    verify.add_argument("--seed", type=int, default=DEFAULT_VERIFY_SEED)
    verify.add_argument("--alpha", default="auto", metavar="VALUE|auto", help="fixed step; auto = 1/||A||")
    verify.add_argument("--iters", type=int, default=DEFAULT_VERIFY_ITERS)
    verify.add_argument("--inject-singular", action="store_true", help="use a singular matrix (refused)")
    verify.add_argument("--out", metavar="DIR")
    verify.set_defaults(func=cmd_verify_bound)

    plot = sub.add_parser("plot", help="re-render an SVG from trace CSVs")
    plot.add_argument("--inputs", nargs="+", required=True, metavar="CSV")
    plot.add_argument("--column", choices=PLOT_COLUMNS, default="rel_error")
    plot.add_argument("--out", metavar="SVG")
    plot.add_argument("--log", action=argparse.BooleanOptionalAction, default=True, help="log y axis")
    plot.set_defaults(func=cmd_plot)

    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entrypoint."""
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"{RED}✗ {e}{RESET}", file=sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as e:
        print(f"{RED}✗ {e}{RESET}", file=sys.stderr)
        return EXIT_USAGE
    except ConstructionError as e:
        print(f"{RED}✗ generation failed: {e}{RESET}", file=sys.stderr)
        return EXIT_GENERATION
    except TraceIOError as e:
        print(f"{RED}✗ {e}{RESET}", file=sys.stderr)
        return EXIT_VIOLATION
    except KeyboardInterrupt:
        print(f"\n{RED}✗ Cancelled{RESET}", file=sys.stderr)
        return EXIT_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
