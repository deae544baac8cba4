"""Tests for the quadratic solvers and the FRGD bound check."""

import math

import numpy as np
import pytest

from ncgmomentum.constants import FLAG_BETA_FALLBACK
from ncgmomentum.linalg import DimensionError, svd_spectrum
from ncgmomentum.problems import laplacian_quadratic, random_spd_quadratic
from ncgmomentum.smooth import (
    DegenerateDirectionError,
    MomentumKind,
    NotPositiveDefiniteError,
    QuadraticProblem,
    SmoothAlgorithm,
    SmoothSolverSpec,
    StepMode,
    ZeroDenominatorError,
    exact_line_search,
    momentum_coefficient,
    nesterov_t_next,
    quad_grad,
    run_smooth,
    verify_theorem1,
)


def _spd(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n))
    return M.T @ M / n + np.eye(n), rng.standard_normal(n)


def test_quadratic_problem_validation():
    """Non-symmetric, indefinite and mismatched inputs are refused."""
    with pytest.raises(ValueError, match="not symmetric"):
        QuadraticProblem(A=np.array([[1.0, 1.0], [0.0, 1.0]]), b=np.zeros(2))
    with pytest.raises(ValueError, match="positive semidefinite"):
        QuadraticProblem(A=np.diag([1.0, -1.0]), b=np.zeros(2))
    with pytest.raises(DimensionError):
        QuadraticProblem(A=np.eye(2), b=np.zeros(3))


def test_quadratic_problem_is_read_only():
    """Stored arrays cannot be modified in place."""
    problem = QuadraticProblem(A=np.eye(2), b=np.ones(2))
    with pytest.raises(ValueError):
        problem.b[0] = 5.0


def test_solver_spec_validation():
    """SD needs line search; GDM needs beta; fixed steps must be positive."""
    with pytest.raises(ValueError, match="line search"):
        SmoothSolverSpec(algorithm=SmoothAlgorithm.SD)
    with pytest.raises(ValueError, match="momentum_beta"):
        SmoothSolverSpec(algorithm=SmoothAlgorithm.GDM)
    with pytest.raises(ValueError, match="positive"):
        SmoothSolverSpec(algorithm=SmoothAlgorithm.GD, alpha=0.0)


def test_solver_labels():
    """Labels combine the scheme name and the step mode."""
    assert SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD).label == "FRGD/fx"
    assert SmoothSolverSpec(
        algorithm=SmoothAlgorithm.FRGD, step_mode=StepMode.LINE_SEARCH, momentum_kind=MomentumKind.PR
    ).label == "PRGD/ls"
    assert SmoothSolverSpec(algorithm=SmoothAlgorithm.GDM, momentum_beta=0.9).label == "GDM/fx"


def test_quad_grad_example():
    """A x + b on a diagonal example."""
    problem = QuadraticProblem(A=np.diag([1.0, 2.0]), b=np.array([3.0, 4.0]))
    assert np.array_equal(quad_grad(problem, np.ones(2)), [4.0, 6.0])


def test_quad_grad_vanishes_at_minimizer():
    """The gradient is zero at -A^-1 b."""
    A, b = _spd(6, 0)
    problem = QuadraticProblem(A=A, b=b)
    x_star = -np.linalg.solve(A, b)
    assert np.linalg.norm(quad_grad(problem, x_star)) <= 1e-12 * max(1.0, np.linalg.norm(b))


def test_quad_grad_matches_finite_differences():
    """Central differences with h = 1e-5 agree to 1e-6 relative."""
    rng = np.random.default_rng(4)
    h = 1e-5
    for seed in range(50):
        A, b = _spd(8, seed)
        problem = QuadraticProblem(A=A, b=b)
        x = rng.standard_normal(8)
        fd = np.array([
            (problem.objective(x + h * e) - problem.objective(x - h * e)) / (2 * h)
            for e in np.eye(8)
        ])
        grad = quad_grad(problem, x)
        assert np.linalg.norm(fd - grad) <= 1e-6 * np.linalg.norm(grad)


def test_exact_line_search_lands_on_minimizer():
    """A = I, b = [-1, 0]: one exact step along e_1 from 0 reaches [1, 0]."""
    problem = QuadraticProblem(A=np.eye(2), b=np.array([-1.0, 0.0]))
    alpha = exact_line_search(problem, np.zeros(2), np.array([1.0, 0.0]))
    assert alpha == pytest.approx(1.0)


def test_exact_line_search_orthogonal_direction():
    """A direction orthogonal to the gradient gets a zero step."""
    problem = QuadraticProblem(A=np.eye(2), b=np.array([-1.0, 0.0]))
    assert exact_line_search(problem, np.zeros(2), np.array([0.0, 1.0])) == 0.0


def test_exact_line_search_beats_sampled_steps():
    """The exact step is no worse than 100 random alternatives."""
    rng = np.random.default_rng(5)
    A, b = _spd(5, 1)
    problem = QuadraticProblem(A=A, b=b)
    x, p = rng.standard_normal(5), rng.standard_normal(5)
    alpha = exact_line_search(problem, x, p)
    best = problem.objective(x + alpha * p)
    for other in rng.uniform(-5.0, 5.0, size=100):
        assert best <= problem.objective(x + other * p) + 1e-12


def test_exact_line_search_degenerate_direction():
    """Directions in the null space of A are refused."""
    problem = QuadraticProblem(A=np.diag([1.0, 0.0]), b=np.zeros(2))
    with pytest.raises(DegenerateDirectionError):
        exact_line_search(problem, np.ones(2), np.array([0.0, 1.0]))


def test_momentum_coefficients():
    """FR, PR, HS and DY on small examples."""
    g_prev = np.array([2.0, 0.0])
    assert momentum_coefficient(MomentumKind.FR, np.array([0.6, 0.8]), g_prev, np.zeros(2)) == pytest.approx(0.25)
    assert momentum_coefficient(MomentumKind.PR, g_prev, g_prev, np.zeros(2)) == 0.0
    # diff = [-1, 0], -<x, diff> = 1
    x = np.array([1.0, 0.0])
    g, gp = np.array([1.0, 1.0]), np.array([2.0, 1.0])
    assert momentum_coefficient(MomentumKind.HS, g, gp, x) == pytest.approx(-1.0)
    assert momentum_coefficient(MomentumKind.DY, g, gp, x) == pytest.approx(2.0)
    # <p_prev, diff> = -1
    assert momentum_coefficient(
        MomentumKind.DY, g, gp, x, p_prev=np.array([1.0, 0.0]), conventional_hs_dy=True
    ) == pytest.approx(-2.0)


def test_momentum_zero_denominator():
    """DY with x orthogonal to the gradient change has no coefficient."""
    with pytest.raises(ZeroDenominatorError):
        momentum_coefficient(MomentumKind.DY, np.array([0.0, 1.0]), np.array([1.0, 0.0]), np.array([1.0, 1.0]))
    with pytest.raises(ZeroDenominatorError):
        momentum_coefficient(MomentumKind.FR, np.ones(2), np.zeros(2), np.zeros(2))


def test_nesterov_sequence_identity():
    """t'(t' - 1) = t^2 along the sequence."""
    t = 1.0
    for _ in range(50):
        t_next = nesterov_t_next(t)
        assert t_next * (t_next - 1.0) == pytest.approx(t * t, rel=1e-12)
        t = t_next


def test_gd_single_step_on_identity():
    """GD with alpha = 1 on A = I reaches the minimizer in one step."""
    problem = QuadraticProblem(A=np.eye(2), b=np.array([-1.0, 2.0]), ground_truth=np.array([1.0, -2.0]))
    trace = run_smooth(problem, SmoothSolverSpec(algorithm=SmoothAlgorithm.GD, alpha=1.0, max_iters=3))
    assert np.allclose(trace.final_x, [1.0, -2.0])
    assert trace.rows[1].rel_error == 0.0
    assert [row.iter for row in trace.rows] == [0, 1]
    assert trace.stop_reason == "tolerance"


def test_trace_rows_and_stop_tolerance():
    """record_every thins the rows; stop_tol ends the run early."""
    A, b = _spd(6, 2)
    problem = QuadraticProblem(A=A, b=b)
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.GD, alpha=0.1, max_iters=40, record_every=10)
    trace = run_smooth(problem, spec)
    assert [row.iter for row in trace.rows] == [0, 10, 20, 30, 40]
    assert trace.rows[0].alpha is None and trace.rows[1].alpha == 0.1

    spec = SmoothSolverSpec(
        algorithm=SmoothAlgorithm.FRGD, step_mode=StepMode.LINE_SEARCH, max_iters=100, stop_tol=1e-9
    )
    trace = run_smooth(problem, spec)
    assert trace.stop_reason == "tolerance"
    assert trace.iterations < 100


def test_sd_objective_non_increasing():
    """Steepest descent never increases the objective."""
    A, b = _spd(10, 3)
    problem = QuadraticProblem(A=A, b=b)
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.SD, step_mode=StepMode.LINE_SEARCH, max_iters=50)
    objectives = [row.objective for row in run_smooth(problem, spec).rows]
    assert all(later <= earlier + 1e-12 * abs(earlier) for earlier, later in zip(objectives, objectives[1:]))


def test_frgd_line_search_is_conjugate_gradient():
    """FRGD with exact steps terminates in at most n steps with orthogonal residuals."""
    A, b = _spd(10, 4)
    problem = QuadraticProblem(A=A, b=b)
    spec = SmoothSolverSpec(
        algorithm=SmoothAlgorithm.FRGD, step_mode=StepMode.LINE_SEARCH, max_iters=10, keep_iterates=True
    )
    trace = run_smooth(problem, spec)
    x_star = -np.linalg.solve(A, b)
    assert np.linalg.norm(trace.final_x - x_star) <= 1e-8 * np.linalg.norm(x_star)
    residuals = [quad_grad(problem, x) for x in trace.iterates[:6]]
    for i in range(len(residuals)):
        for j in range(i):
            cos = residuals[i] @ residuals[j] / (np.linalg.norm(residuals[i]) * np.linalg.norm(residuals[j]))
            assert abs(cos) <= 1e-8


def test_frgd_beta_fallback_is_flagged():
    """An unchanged gradient leaves DY without a denominator; beta falls back to 0."""
    # gradient stays [0, 1] along the null direction of A
    problem = QuadraticProblem(A=np.diag([1.0, 0.0]), b=np.array([0.0, 1.0]))
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD, momentum_kind=MomentumKind.DY, alpha=0.5, max_iters=3)
    trace = run_smooth(problem, spec)
    assert trace.has_flag(FLAG_BETA_FALLBACK)
    assert trace.rows[2].beta == 0.0
    assert np.allclose(trace.final_x, [0.0, -1.5])


def test_divergence_is_flagged_not_raised():
    """A step far beyond 2/L diverges into a flagged final row."""
    problem = QuadraticProblem(A=np.diag([1.0, 1e3]), b=np.ones(2))
    trace = run_smooth(problem, SmoothSolverSpec(algorithm=SmoothAlgorithm.GD, alpha=10.0, max_iters=2000))
    assert trace.diverged
    assert trace.stop_reason == "diverged"
    assert not math.isfinite(trace.rows[-1].objective)


def test_laplacian_quadratic_ground_truth():
    """The centered Laplacian quadratic is stationary at its ground truth."""
    problem = laplacian_quadratic(20)
    assert np.linalg.norm(quad_grad(problem, problem.ground_truth)) <= 1e-10
    assert laplacian_quadratic(20, centered=False).ground_truth is None


def test_bound_report_geometric_factor():
    """diag(1, 4) has kappa 4; row 0 always holds."""
    problem = QuadraticProblem(A=np.diag([1.0, 4.0]), b=np.array([1.0, 1.0]))
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD, alpha=0.25, max_iters=5, keep_iterates=True)
    report = verify_theorem1(problem, run_smooth(problem, spec).iterates, 0.25)
    assert report.kappa_A == pytest.approx(4.0)
    first = report.rows[0]
    assert first.l == 0 and first.holds and first.k_bound == 0.0
    assert first.rhs == pytest.approx(2.0 * first.lhs)
    if len(report.rows) > 1:
        second = report.rows[1]
        assert second.cg_rhs == pytest.approx(2.0 * first.lhs / 3.0)


def test_bound_truncates_at_rank_deficiency():
    """In two dimensions Z can hold at most two independent columns."""
    problem = QuadraticProblem(A=np.diag([1.0, 3.0]), b=np.array([1.0, -2.0]))
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD, alpha=0.2, max_iters=6, keep_iterates=True)
    report = verify_theorem1(problem, run_smooth(problem, spec).iterates, 0.2)
    assert len(report.rows) <= 2
    assert report.truncated_at is not None
    assert all(row.z_rank == row.l + 1 for row in report.rows)


def test_bound_holds_on_random_spd():
    """FRGD/fx with alpha = 1/||A|| satisfies the bound on a 50x50 instance."""
    problem = random_spd_quadratic(50, 2)
    alpha = 1.0 / svd_spectrum(problem.A).spectral_norm
    spec = SmoothSolverSpec(algorithm=SmoothAlgorithm.FRGD, alpha=alpha, max_iters=30, keep_iterates=True)
    report = verify_theorem1(problem, run_smooth(problem, spec).iterates, alpha)
    assert report.rows
    assert report.all_hold
    for row in report.rows:
        assert row.k_bound == pytest.approx(alpha * row.k_statement)


def test_bound_refuses_singular_matrix():
    """A singular matrix cannot be checked."""
    problem = random_spd_quadratic(6, 1, singular=True)
    with pytest.raises(NotPositiveDefiniteError, match="strictly positive definite"):
        verify_theorem1(problem, [np.zeros(6)], 0.1)
