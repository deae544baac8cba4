"""Forward-backward splitting solvers for lam * f(x) + 1/2 ||Ax - b||^2."""

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import (
    DEFAULT_INNER_MAX,
    DEFAULT_INNER_TOL,
    FLAG_BETA_CAPPED,
    FLAG_BETA_FALLBACK,
    FLAG_DIVERGED,
    TUNING_GRID,
    TUNING_TIE_RTOL,
)
from .diagnostics import Trace, TraceRow, relative_error
from .linalg import DenseMatrix, DimensionError, Vector, as_matrix, as_vector, frozen, matvec, norm2
from .prox import RegularizerKind, prox, prox_l1, reg_value, subdiff_distance
from .smooth import MomentumKind, ZeroDenominatorError, momentum_coefficient, nesterov_t_next

logger = logging.getLogger(__name__)


class CompositeAlgorithm(str, Enum):
    ISTA = "ista"
    FISTA = "fista"
    APG = "apg"
    MOMENTUM_PROX = "prox"
    DCA = "dca"


@dataclass(frozen=True)
class CompositeProblem:
    """lam * reg(x) + 1/2 ||Ax - b||^2 over an M x N sensing matrix."""

    A: DenseMatrix
    b: Vector
    lam: float
    reg: RegularizerKind = RegularizerKind.L1
    ground_truth: Optional[Vector] = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape[0] != b.shape[0]:
            raise DimensionError(f"sensing matrix {A.shape} does not match data of length {b.shape[0]}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        object.__setattr__(self, "A", frozen(A))
        object.__setattr__(self, "b", frozen(b))
        object.__setattr__(self, "reg", RegularizerKind(self.reg))
        if self.ground_truth is not None:
            x_star = as_vector(self.ground_truth, "ground_truth")
            if x_star.shape[0] != A.shape[1]:
                raise DimensionError("ground truth length does not match the sensing matrix")
            object.__setattr__(self, "ground_truth", frozen(x_star))

    @property
    def size(self) -> int:
        return self.A.shape[1]

    def residual(self, x: Vector) -> Vector:
        return matvec(self.A, x) - self.b

    def smooth_value(self, x: Vector) -> float:
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def smooth_grad(self, x: Vector) -> Vector:
        """A'(Ax - b)."""
        return self.A.T @ self.residual(x)

    def with_lambda(self, lam: float) -> "CompositeProblem":
        return CompositeProblem(A=self.A, b=self.b, lam=lam, reg=self.reg, ground_truth=self.ground_truth)


@dataclass(frozen=True)
class CompositeSolverSpec:
    """
    Which splitting scheme to run and for how long.

    MOMENTUM_PROX uses momentum_kind for its coefficient. DCA counts inner
    iterations against max_iters. stop_tol (relative iterate change) of 0
    disables early stopping.
    """

    algorithm: CompositeAlgorithm
    delta: float
    momentum_kind: MomentumKind = MomentumKind.FR
    max_iters: int = 1000
    stop_tol: float = 0.0
    inner_tol: float = DEFAULT_INNER_TOL
    inner_max: int = DEFAULT_INNER_MAX
    record_every: int = 1
    cap_beta: bool = False
    conventional_hs_dy: bool = False

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"step size delta must be positive, got {self.delta}")
        if self.max_iters < 1 or self.record_every < 1 or self.inner_max < 1:
            raise ValueError("iteration budgets must be positive")
        if self.stop_tol < 0 or self.inner_tol < 0:
            raise ValueError("tolerances must be non-negative")

    @property
    def label(self) -> str:
        if self.algorithm is CompositeAlgorithm.MOMENTUM_PROX:
            return f"{self.momentum_kind.value.upper()}-prox"
        return self.algorithm.value.upper()

    def echo(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "delta": self.delta,
            "momentum_kind": self.momentum_kind.value,
            "max_iters": self.max_iters,
            "stop_tol": self.stop_tol,
            "inner_tol": self.inner_tol,
            "inner_max": self.inner_max,
            "record_every": self.record_every,
            "cap_beta": self.cap_beta,
            "conventional_hs_dy": self.conventional_hs_dy,
        }

    def with_delta(self, delta: float) -> "CompositeSolverSpec":
        return dataclasses.replace(self, delta=delta)


def composite_objective(problem: CompositeProblem, x: Vector) -> float:
    """lam * reg(x) + 1/2 ||Ax - b||^2."""
    return problem.lam * reg_value(problem.reg, x) + problem.smooth_value(x)


def prox_gradient_step(problem: CompositeProblem, x: Vector, delta: float) -> Vector:
    """Forward-backward step prox_reg(x - delta * grad g(x); delta * lam)."""
    return prox(problem.reg, x - delta * problem.smooth_grad(x), delta * problem.lam)


def stationarity_residual(problem: CompositeProblem, x: Vector) -> float:
    """Distance of -grad g(x) / lam to the regularizer's subdifferential at x."""
    return subdiff_distance(problem.reg, x, -problem.smooth_grad(x) / problem.lam)


def _relative_change(x_new: Vector, x: Vector) -> float:
    return norm2(x_new - x) / max(1.0, norm2(x))


def _finite(x: Vector) -> bool:
    return bool(np.all(np.isfinite(x)))


class _Recorder:
    """Appends rows at multiples of record_every and tracks divergence."""

    def __init__(self, problem: CompositeProblem, trace: Trace, every: int, delta: float):
        self.problem = problem
        self.trace = trace
        self.every = every
        self.delta = delta

    def row(self, k: int, x: Vector, change: float, beta: Optional[float], flags: Sequence[str] = ()) -> TraceRow:
        p = self.problem
        rel = relative_error(x, p.ground_truth) if p.ground_truth is not None else None
        return TraceRow(iter=k, objective=composite_objective(p, x), rel_error=rel,
                        norm=change, alpha=self.delta, beta=beta, flags=tuple(flags))

    def step(self, k: int, x: Vector, change: float, beta: Optional[float], flags: List[str]) -> bool:
        """Record iteration k; returns False if the run diverged."""
        if not _finite(x):
            flags.append(FLAG_DIVERGED)
            self.trace.append(TraceRow(iter=k, objective=float("nan"), norm=float("nan"),
                                       alpha=self.delta, beta=beta, flags=tuple(flags)))
            self.trace.stop_reason = "diverged"
            return False
        if k % self.every == 0:
            row = self.row(k, x, change, beta, flags)
            self.trace.append(row)
            if not math.isfinite(row.objective):
                self.trace.stop_reason = "diverged"
                return False
        return True


def run_composite(problem: CompositeProblem, spec: CompositeSolverSpec, x0: Optional[Vector] = None) -> Trace:
    """
    Run ISTA, FISTA, APG or the momentum-prox scheme.

    FISTA and APG extrapolate with the Nesterov t-sequence (t_0 = 1); APG
    keeps the better of the extrapolated and plain prox steps. The
    momentum-prox scheme sets y = x_l + beta (x_l - x_{l-1}) with beta from
    the chosen conjugate gradient formula on grad g at x_l and x_{l-1}, then
    takes a prox step at y. The first step uses x_{-1} = x_0.
    """
    if spec.algorithm is CompositeAlgorithm.DCA:
        raise ValueError("DCA runs through run_dca")
    n = problem.size
    x = np.zeros(n) if x0 is None else as_vector(x0, "x0").copy()
    if x.shape[0] != n:
        raise DimensionError(f"x0 has length {x.shape[0]}, problem has {n}")

    trace = Trace(label=spec.label, meta={"spec": spec.echo()})
    recorder = _Recorder(problem, trace, spec.record_every, spec.delta)
    trace.append(recorder.row(0, x, 0.0, None))

    algo = spec.algorithm
    delta = spec.delta
    x_prev = x.copy()
    u = x.copy()
    t = 1.0
    g_prev: Optional[Vector] = None

    started = time.perf_counter()
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, spec.max_iters + 1):
            flags: List[str] = []
            beta: Optional[float] = None
            if algo is CompositeAlgorithm.ISTA:
                x_new = prox_gradient_step(problem, x, delta)
            elif algo is CompositeAlgorithm.FISTA:
                t_next = nesterov_t_next(t)
                beta = (t - 1.0) / t_next
                y = x + beta * (x - x_prev)
                x_new = prox_gradient_step(problem, y, delta)
                t = t_next
            elif algo is CompositeAlgorithm.APG:
                t_next = nesterov_t_next(t)
                beta = (t - 1.0) / t_next
                y = x + (t / t_next) * (u - x) + beta * (x - x_prev)
                u = prox_gradient_step(problem, y, delta)
                v = prox_gradient_step(problem, x, delta)
                x_new = u if composite_objective(problem, u) <= composite_objective(problem, v) else v
                t = t_next
            else:
                g = problem.smooth_grad(x)
                if g_prev is None:
                    y = x
                else:
                    try:
                        beta = momentum_coefficient(
                            spec.momentum_kind, g, g_prev, x, p_prev=x - x_prev,
                            conventional_hs_dy=spec.conventional_hs_dy,
                        )
                    except ZeroDenominatorError as e:
                        logger.warning("%s step %d: %s, falling back to beta=0", spec.label, k, e)
                        beta = 0.0
                        flags.append(FLAG_BETA_FALLBACK)
                    if spec.cap_beta and beta > 1.0:
                        beta = 1.0
                        flags.append(FLAG_BETA_CAPPED)
                    y = x + beta * (x - x_prev)
                x_new = prox_gradient_step(problem, y, delta)
                g_prev = g

            change = norm2(x_new - x)
            relative = change / max(1.0, norm2(x))
            x_prev, x = x, x_new
            done = k
            if not recorder.step(k, x, change, beta, flags):
                break
            if spec.stop_tol > 0 and relative <= spec.stop_tol:
                trace.stop_reason = "tolerance"
                break

    trace.iterations = done
    trace.final_x = x
    trace.final_value = composite_objective(problem, x) if _finite(x) else float("nan")
    trace.meta["wall_time"] = time.perf_counter() - started
    logger.debug("%s(delta=%g): %d steps, stop=%s", spec.label, delta, done, trace.stop_reason)
    return trace


def run_dca(problem: CompositeProblem, spec: CompositeSolverSpec, x0: Optional[Vector] = None) -> Trace:
    """
    Difference-of-convex algorithm for lam (||x||_1 - ||x||_2) + 1/2 ||Ax - b||^2.

    Each outer step linearises -lam ||x||_2 at x_l (tilt s = lam x_l / ||x_l||,
    s = 0 at x_l = 0) and solves the convex l1 subproblem with FISTA, warm
    started at x_l, until the relative inner change is <= inner_tol or
    inner_max steps. Rows and max_iters count inner iterations.
    """
    if problem.reg is not RegularizerKind.L1_MINUS_L2:
        raise ValueError("DCA needs the l1-l2 regularizer")
    n = problem.size
    x = np.zeros(n) if x0 is None else as_vector(x0, "x0").copy()
    if x.shape[0] != n:
        raise DimensionError(f"x0 has length {x.shape[0]}, problem has {n}")

    trace = Trace(label=spec.label, meta={"spec": spec.echo()})
    recorder = _Recorder(problem, trace, spec.record_every, spec.delta)
    trace.append(recorder.row(0, x, 0.0, None))
    trace.outer_objectives.append(composite_objective(problem, x))

    delta = spec.delta
    threshold = delta * problem.lam
    total = 0
    outer = 0
    started = time.perf_counter()
    alive = True
    with np.errstate(over="ignore", invalid="ignore"):
        while alive and total < spec.max_iters:
            x_norm = norm2(x)
            tilt = problem.lam * x / x_norm if x_norm > 0 else np.zeros(n)
            z, z_prev, t = x.copy(), x.copy(), 1.0
            for _ in range(spec.inner_max):
                if total >= spec.max_iters:
                    break
                t_next = nesterov_t_next(t)
                y = z + ((t - 1.0) / t_next) * (z - z_prev)
                grad = problem.smooth_grad(y) - tilt
                z_new = prox_l1(y - delta * grad, threshold)
                change = norm2(z_new - z)
                relative = change / max(1.0, norm2(z))
                z_prev, z, t = z, z_new, t_next
                total += 1
                if not recorder.step(total, z, change, None, []):
                    alive = False
                    break
                if relative <= spec.inner_tol:
                    break
            outer += 1
            outer_change = _relative_change(z, x)
            x = z
            if alive:
                trace.outer_objectives.append(composite_objective(problem, x))
            if spec.stop_tol > 0 and outer_change <= spec.stop_tol:
                trace.stop_reason = "tolerance"
                break

    trace.iterations = total
    trace.final_x = x
    trace.final_value = composite_objective(problem, x) if _finite(x) else float("nan")
    trace.meta["outer_iterations"] = outer
    trace.meta["wall_time"] = time.perf_counter() - started
    logger.debug("DCA(delta=%g): %d outer / %d inner steps, stop=%s", delta, outer, total, trace.stop_reason)
    return trace


def run_solver(problem: CompositeProblem, spec: CompositeSolverSpec, x0: Optional[Vector] = None) -> Trace:
    """Dispatch to run_dca or run_composite."""
    if spec.algorithm is CompositeAlgorithm.DCA:
        return run_dca(problem, spec, x0)
    return run_composite(problem, spec, x0)


def is_convergent(trace: Trace) -> bool:
    """No divergence and a final objective no larger than the initial one."""
    if trace.diverged or trace.final_x is None or not _finite(trace.final_x):
        return False
    return trace.final_objective <= trace.initial_objective


@dataclass
class SweepResult:
    """Runs of one solver over a parameter grid and the selected grid point."""

    best: float
    trace: Trace
    finals: Dict[float, Optional[float]]


def tune_delta(
    problem: CompositeProblem,
    spec: CompositeSolverSpec,
    grid: Sequence[float] = TUNING_GRID,
    x0: Optional[Vector] = None,
) -> SweepResult:
    """
    Pick delta from grid by the smallest final objective among convergent runs.

    Final objectives within TUNING_TIE_RTOL * max(1, |F|) of the smallest are
    ties, resolved in favour of the larger delta. Falls back to the smallest
    grid value when no run converges.
    """
    runs: List[Tuple[float, Trace]] = []
    finals: Dict[float, Optional[float]] = {}
    fallback: Optional[Trace] = None
    for delta in sorted(grid):
        trace = run_solver(problem, spec.with_delta(delta), x0)
        ok = is_convergent(trace)
        finals[delta] = trace.final_objective if ok else None
        if fallback is None:
            fallback = trace
        if ok:
            runs.append((delta, trace))
    if not runs:
        logger.warning("%s: no convergent delta on %s, using %g", spec.label, list(grid), min(grid))
        return SweepResult(best=min(grid), trace=fallback, finals=finals)
    lowest = min(trace.final_objective for _, trace in runs)
    cutoff = lowest + TUNING_TIE_RTOL * max(1.0, abs(lowest))
    delta, trace = max((run for run in runs if run[1].final_objective <= cutoff), key=lambda run: run[0])
    logger.info("%s: tuned delta=%g (final objective %.6e)", spec.label, delta, trace.final_objective)
    return SweepResult(best=delta, trace=trace, finals=finals)


def tune_lambda(
    make_problem,
    grid: Sequence[float] = TUNING_GRID,
    delta: float = 1e-3,
    max_iters: int = 1000,
) -> SweepResult:
    """
    Pick lambda from grid by running the FR momentum-prox scheme at a fixed delta.

    Args:
        make_problem: Callable lam -> CompositeProblem
        grid: Candidate lambda values
        delta: Step size of the tuning runs
        max_iters: Iterations per tuning run

    Raises:
        RuntimeError: If no lambda gives a convergent run
    """
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.MOMENTUM_PROX, delta=delta, max_iters=max_iters)
    best: Optional[Tuple[float, float, Trace]] = None
    finals: Dict[float, Optional[float]] = {}
    for lam in sorted(grid):
        trace = run_composite(make_problem(lam), spec)
        ok = is_convergent(trace)
        finals[lam] = trace.final_objective if ok else None
        if ok and (best is None or trace.final_objective < best[1]):
            best = (lam, trace.final_objective, trace)
    if best is None:
        raise RuntimeError(f"no convergent lambda on {list(grid)}")
    logger.info("tuned lambda=%g (final objective %.6e)", best[0], best[1])
    return SweepResult(best=best[0], trace=best[2], finals=finals)
