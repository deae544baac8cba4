"""Iterative schemes for the quadratic model g(x) = 1/2 x'Ax + x'b."""

import logging
import math
import time
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import scipy.linalg

from .constants import (
    DEFAULT_QUAD_ALPHA,
    DEGENERATE_DIRECTION_RTOL,
    FLAG_BETA_FALLBACK,
    FLAG_DEGENERATE,
    FLAG_DIVERGED,
    PSD_RTOL,
    SPD_RTOL,
    SYMMETRY_RTOL,
    BOUND_SLACK,
    ZERO_DENOMINATOR_RTOL,
)
from .diagnostics import BoundReport, BoundRow, Trace, TraceRow, relative_error
from .linalg import (
    DenseMatrix,
    DimensionError,
    Vector,
    as_matrix,
    as_vector,
    dot,
    frozen,
    matvec,
    norm2,
    svd_spectrum,
)

logger = logging.getLogger(__name__)


class DegenerateDirectionError(ArithmeticError):
    """Raised when an exact line search direction has p'Ap ~ 0."""
    pass


class ZeroDenominatorError(ArithmeticError):
    """Raised when a momentum coefficient has a vanishing denominator."""
    pass


class NotPositiveDefiniteError(ValueError):
    """Raised when a strictly positive definite matrix is required."""
    pass


class SmoothAlgorithm(str, Enum):
    GD = "gd"
    SD = "sd"
    GDM = "gdm"
    NAG = "nag"
    FRGD = "frgd"


class StepMode(str, Enum):
    FIXED = "fx"
    LINE_SEARCH = "ls"


class MomentumKind(str, Enum):
    """Nonlinear conjugate gradient momentum formulas."""

    FR = "fr"
    PR = "pr"
    HS = "hs"
    DY = "dy"


@dataclass(frozen=True)
class QuadraticProblem:
    """
    g(x) = 1/2 x'Ax + x'b with A symmetric positive semidefinite.

    The minimizer (when it exists) is -A^+ b, so ground_truth is optional.
    """

    A: DenseMatrix
    b: Vector
    ground_truth: Optional[Vector] = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
            raise DimensionError(f"quadratic needs square A matching b, got {A.shape} and {b.shape}")
        fro = np.linalg.norm(A, "fro")
        if np.linalg.norm(A - A.T, "fro") > SYMMETRY_RTOL * fro:
            raise ValueError("quadratic matrix is not symmetric")
        eig = scipy.linalg.eigvalsh(A)
        if eig[0] < -PSD_RTOL * max(abs(eig[0]), abs(eig[-1])):
            raise ValueError(f"quadratic matrix is not positive semidefinite (min eigenvalue {eig[0]:.3e})")
        object.__setattr__(self, "A", frozen(A))
        object.__setattr__(self, "b", frozen(b))
        if self.ground_truth is not None:
            x_star = as_vector(self.ground_truth, "ground_truth")
            if x_star.shape != b.shape:
                raise DimensionError("ground truth length does not match b")
            object.__setattr__(self, "ground_truth", frozen(x_star))

    @property
    def size(self) -> int:
        return self.b.shape[0]

    def objective(self, x: Vector) -> float:
        return 0.5 * float(x @ (self.A @ x)) + float(x @ self.b)


@dataclass(frozen=True)
class SmoothSolverSpec:
    """
    Which update rule to run on a quadratic and for how long.

    FRGD runs the nonlinear-conjugate-gradient momentum scheme; momentum_kind
    selects FR (default), PR, HS or DY.
    """

    algorithm: SmoothAlgorithm
    step_mode: StepMode = StepMode.FIXED
    alpha: float = DEFAULT_QUAD_ALPHA
    momentum_beta: Optional[float] = None
    momentum_kind: MomentumKind = MomentumKind.FR
    max_iters: int = 1000
    stop_tol: float = 0.0
    record_every: int = 1
    conventional_hs_dy: bool = False
    keep_iterates: bool = False

    def __post_init__(self):
        if self.algorithm is SmoothAlgorithm.SD and self.step_mode is not StepMode.LINE_SEARCH:
            raise ValueError("steepest descent requires exact line search")
        if self.algorithm is SmoothAlgorithm.GDM and self.momentum_beta is None:
            raise ValueError("GDM requires momentum_beta")
        if self.step_mode is StepMode.FIXED and not self.alpha > 0:
            raise ValueError(f"fixed step size must be positive, got {self.alpha}")
        if self.max_iters < 1 or self.record_every < 1:
            raise ValueError("max_iters and record_every must be positive")
        if self.stop_tol < 0:
            raise ValueError("stop_tol must be non-negative")

    @property
    def label(self) -> str:
        if self.algorithm is SmoothAlgorithm.FRGD:
            name = f"{self.momentum_kind.value.upper()}GD"
        else:
            name = self.algorithm.value.upper()
        return f"{name}/{self.step_mode.value}"

    def echo(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "step_mode": self.step_mode.value,
            "alpha": self.alpha if self.step_mode is StepMode.FIXED else None,
            "momentum_beta": self.momentum_beta,
            "momentum_kind": self.momentum_kind.value,
            "max_iters": self.max_iters,
            "stop_tol": self.stop_tol,
            "record_every": self.record_every,
            "conventional_hs_dy": self.conventional_hs_dy,
        }


def quad_grad(problem: QuadraticProblem, x: Vector) -> Vector:
    """Gradient A x + b."""
    return matvec(problem.A, x) + problem.b


def exact_line_search(problem: QuadraticProblem, x: Vector, p: Vector) -> float:
    """
    Exact minimizer of g(x + alpha p) over alpha.

    Raises:
        DegenerateDirectionError: If p'Ap <= 1e-14 ||p||^2
    """
    Ap = matvec(problem.A, p)
    curvature = dot(p, Ap)
    if curvature <= DEGENERATE_DIRECTION_RTOL * dot(p, p):
        raise DegenerateDirectionError(f"direction has curvature {curvature:.3e}")
    return -dot(p, quad_grad(problem, x)) / curvature


def _ratio(num: float, u: Vector, v: Vector, sign: float = 1.0) -> float:
    # Denominator sign * <u, v>, judged against the Cauchy-Schwarz scale ||u|| ||v||
    den = sign * dot(u, v)
    scale = norm2(u) * norm2(v)
    if scale == 0.0 or abs(den) <= ZERO_DENOMINATOR_RTOL * scale:
        raise ZeroDenominatorError(f"momentum denominator {den:.3e} at scale {scale:.3e}")
    return num / den


def momentum_coefficient(
    kind: MomentumKind,
    g_curr: Vector,
    g_prev: Vector,
    x_curr: Vector,
    p_prev: Optional[Vector] = None,
    conventional_hs_dy: bool = False,
) -> float:
    """
    Nonlinear conjugate gradient momentum coefficient.

    FR: ||g||^2 / ||g_prev||^2
    PR: <g, g - g_prev> / ||g_prev||^2
    HS: <g, g - g_prev> / (-<x, g - g_prev>)
    DY: ||g||^2 / (-<x, g - g_prev>)

    With conventional_hs_dy the HS/DY denominators use the previous search
    direction, <p_prev, g - g_prev>, instead of the iterate.

    Raises:
        ZeroDenominatorError: If the denominator vanishes at its scale
    """
    if kind is MomentumKind.FR:
        return _ratio(dot(g_curr, g_curr), g_prev, g_prev)
    diff = g_curr - g_prev
    if kind is MomentumKind.PR:
        return _ratio(dot(g_curr, diff), g_prev, g_prev)
    num = dot(g_curr, diff) if kind is MomentumKind.HS else dot(g_curr, g_curr)
    if conventional_hs_dy:
        if p_prev is None:
            raise ValueError("conventional HS/DY needs the previous direction")
        return _ratio(num, p_prev, diff)
    return _ratio(num, x_curr, diff, sign=-1.0)


def nesterov_t_next(t: float) -> float:
    """t' = (1 + sqrt(4 t^2 + 1)) / 2."""
    return (1.0 + math.sqrt(4.0 * t * t + 1.0)) / 2.0


def _row(problem: QuadraticProblem, k: int, x: Vector, g: Vector, alpha, beta, flags=()) -> TraceRow:
    rel = relative_error(x, problem.ground_truth) if problem.ground_truth is not None else None
    return TraceRow(
        iter=k,
        objective=problem.objective(x),
        rel_error=rel,
        norm=norm2(g),
        alpha=alpha,
        beta=beta,
        flags=tuple(flags),
    )


def run_smooth(problem: QuadraticProblem, spec: SmoothSolverSpec, x0: Optional[Vector] = None) -> Trace:
    """
    Run one update rule on a quadratic and record its history.

    Rows carry objective, gradient norm, relative error (if the problem has a
    ground truth), step size and momentum. The run stops after max_iters steps,
    once ||grad|| <= stop_tol, on a degenerate line-search direction, or on
    divergence (flagged row).
    """
    n = problem.size
    x = np.zeros(n) if x0 is None else as_vector(x0, "x0").copy()
    if x.shape[0] != n:
        raise DimensionError(f"x0 has length {x.shape[0]}, problem has {n}")

    trace = Trace(label=spec.label, meta={"spec": spec.echo()})
    algo = spec.algorithm
    line_search = spec.step_mode is StepMode.LINE_SEARCH

    def step_size(p: Vector) -> float:
        return exact_line_search(problem, x, p) if line_search else spec.alpha

    g = quad_grad(problem, x)
    g_prev: Optional[Vector] = None
    p: Optional[Vector] = None
    t = 1.0
    y_prev = x.copy()

    trace.append(_row(problem, 0, x, g, None, None))
    if spec.keep_iterates:
        trace.iterates.append(x.copy())

    started = time.perf_counter()
    done = 0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, spec.max_iters + 1):
            if norm2(g) <= spec.stop_tol:
                trace.stop_reason = "tolerance"
                break
            flags: List[str] = []
            beta: Optional[float] = None
            try:
                if algo is SmoothAlgorithm.NAG:
                    t_next = nesterov_t_next(t)
                    alpha = step_size(-g)
                    y = x - alpha * g
                    beta = (t - 1.0) / t_next
                    x_new = y + beta * (y - y_prev)
                    y_prev, t = y, t_next
                else:
                    if algo is SmoothAlgorithm.GDM:
                        beta = spec.momentum_beta
                        direction = -g if p is None else -g + beta * p
                    elif algo is SmoothAlgorithm.FRGD and p is not None:
                        try:
                            beta = momentum_coefficient(
                                spec.momentum_kind, g, g_prev, x, p_prev=p,
                                conventional_hs_dy=spec.conventional_hs_dy,
                            )
                        except ZeroDenominatorError as e:
                            logger.warning("%s step %d: %s, falling back to beta=0", spec.label, k, e)
                            beta = 0.0
                            flags.append(FLAG_BETA_FALLBACK)
                        direction = -g + beta * p
                    else:
                        direction = -g
                    alpha = step_size(direction)
                    x_new = x + alpha * direction
                    p = direction
            except DegenerateDirectionError as e:
                logger.debug("%s stopped at step %d: %s", spec.label, k, e)
                trace.stop_reason = FLAG_DEGENERATE
                break

            g_prev, x = g, x_new
            g = quad_grad(problem, x)
            done = k
            if not (np.all(np.isfinite(x)) and np.all(np.isfinite(g))):
                flags.append(FLAG_DIVERGED)
                trace.append(TraceRow(iter=k, objective=float("nan"), norm=float("nan"),
                                      alpha=alpha, beta=beta, flags=tuple(flags)))
                trace.stop_reason = "diverged"
                break
            if spec.keep_iterates:
                trace.iterates.append(x.copy())
            if k % spec.record_every == 0:
                row = _row(problem, k, x, g, alpha, beta, flags)
                trace.append(row)
                if not math.isfinite(row.objective):
                    trace.stop_reason = "diverged"
                    break
        else:
            if norm2(g) <= spec.stop_tol:
                trace.stop_reason = "tolerance"

    trace.iterations = done
    trace.final_x = x
    trace.final_value = problem.objective(x) if np.all(np.isfinite(x)) else float("nan")
    trace.meta["wall_time"] = time.perf_counter() - started
    logger.debug("%s: %d steps, stop=%s, |grad|=%.3e", spec.label, done, trace.stop_reason, norm2(g))
    return trace


def verify_theorem1(problem: QuadraticProblem, iterates: Sequence[Vector], alpha: float) -> BoundReport:
    """
    Check fixed-step FRGD residuals against the Krylov-type bound

        ||r_l|| <= 2 (1 + K_l) q^l ||r_0||,   q = (sqrt(kappa) - 1) / (sqrt(kappa) + 1),
        K_l = l alpha (1 + l rho / 2) ||A||_2 kappa(Z_{l+1}),

    where r_l is the gradient at iterate l, Z_{l+1} holds the normalised
    residuals r_0..r_l as columns and rho is the largest ratio ||r_i||/||r_j||
    over j <= i <= l - 1. Rows stop at the first l where Z_{l+1} loses full
    column rank.

    Raises:
        NotPositiveDefiniteError: If A is singular at the rank tolerance
    """
    spectrum = svd_spectrum(problem.A)
    if not spectrum.smallest > SPD_RTOL * spectrum.spectral_norm:
        raise NotPositiveDefiniteError(
            f"bound needs a strictly positive definite matrix "
            f"(sigma_min={spectrum.smallest:.3e}, sigma_max={spectrum.spectral_norm:.3e})"
        )
    kappa = spectrum.cond
    norm_A = spectrum.spectral_norm
    root = math.sqrt(kappa)
    q = (root - 1.0) / (root + 1.0)

    residuals = [quad_grad(problem, as_vector(x, "iterate")) for x in iterates]
    norms = [norm2(r) for r in residuals]
    report = BoundReport(kappa_A=kappa, spectral_norm_A=norm_A, alpha=alpha)
    if not residuals:
        return report

    r0 = norms[0]
    rho = 1.0
    columns: List[Vector] = []
    for l, (r, r_norm) in enumerate(zip(residuals, norms)):
        if r_norm == 0.0:
            report.truncated_at = l
            break
        columns.append(r / r_norm)
        z_spectrum = svd_spectrum(np.column_stack(columns))
        z_rank = z_spectrum.rank()
        if z_rank < l + 1:
            report.truncated_at = l
            break
        if l >= 1:
            rho = max(rho, norms[l - 1] / min(norms[:l]))
        k_statement = l * (1.0 + l * rho / 2.0) * norm_A * z_spectrum.cond
        k_bound = alpha * k_statement
        decay = q ** l * r0
        rhs = 2.0 * (1.0 + k_bound) * decay
        report.rows.append(
            BoundRow(
                l=l,
                lhs=r_norm,
                k_bound=k_bound,
                k_statement=k_statement,
                rhs=rhs,
                cg_rhs=2.0 * decay,
                holds=r_norm <= rhs * (1.0 + BOUND_SLACK),
                z_rank=z_rank,
            )
        )
    report.rho = rho
    if report.violations:
        logger.warning("bound violated at l=%s", report.violations)
    return report
