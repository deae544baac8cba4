"""Tests for the forward-backward splitting solvers."""

import dataclasses

import numpy as np
import pytest

from ncgmomentum.composite import (
    CompositeAlgorithm,
    CompositeProblem,
    CompositeSolverSpec,
    composite_objective,
    is_convergent,
    prox_gradient_step,
    run_composite,
    run_dca,
    run_solver,
    stationarity_residual,
    tune_delta,
    tune_lambda,
)
from ncgmomentum.linalg import DimensionError, svd_spectrum
from ncgmomentum.problems import ProblemFamily, ProblemRecipe, build_sparse_instance
from ncgmomentum.prox import RegularizerKind
from ncgmomentum.smooth import MomentumKind


def _random_problem(rows=20, cols=40, lam=0.1, reg=RegularizerKind.L1, seed=0):
    recipe = ProblemRecipe(family=ProblemFamily.SPARSE_RANDOM, rows=rows, cols=cols,
                           sparsity=3, lam=lam, seed=seed, reg=reg)
    return build_sparse_instance(recipe).problem


def _constructed(reg=RegularizerKind.L1):
    recipe = ProblemRecipe(family=ProblemFamily.SPARSE_CONSTRUCTED, rows=64, cols=128,
                           sparsity=3, lam=0.1, seed=1, reg=reg)
    return build_sparse_instance(recipe)


def _safe_delta(problem):
    return 1.0 / svd_spectrum(problem.A).spectral_norm ** 2


def _non_increasing(values, slack=1e-12):
    return all(later <= earlier + slack * max(1.0, abs(earlier)) for earlier, later in zip(values, values[1:]))


def test_problem_validation():
    """Mismatched data and non-positive lambda are refused."""
    with pytest.raises(DimensionError):
        CompositeProblem(A=np.ones((3, 4)), b=np.ones(2), lam=0.1)
    with pytest.raises(ValueError, match="lambda"):
        CompositeProblem(A=np.ones((3, 4)), b=np.ones(3), lam=0.0)


def test_spec_labels_and_validation():
    """Labels name the scheme; delta must be positive."""
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.MOMENTUM_PROX, delta=0.1)
    assert spec.label == "FR-prox"
    assert spec.with_delta(0.01).delta == 0.01
    assert CompositeSolverSpec(algorithm=CompositeAlgorithm.FISTA, delta=0.1).label == "FISTA"
    with pytest.raises(ValueError, match="delta"):
        CompositeSolverSpec(algorithm=CompositeAlgorithm.ISTA, delta=0.0)


def test_composite_objective():
    """lam * ||x||_1 + 1/2 ||Ax - b||^2 on a tiny example."""
    problem = CompositeProblem(A=np.eye(2), b=np.array([1.0, 0.0]), lam=0.5)
    assert composite_objective(problem, np.array([1.0, -2.0])) == pytest.approx(0.5 * 3.0 + 0.5 * 4.0)


@pytest.mark.parametrize("seed", range(50))
def test_smooth_grad_matches_finite_differences(seed):
    """The data-fit gradient agrees with central differences."""
    problem = _random_problem(seed=seed)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(problem.size)
    h = 1e-5
    fd = np.array([
        (problem.smooth_value(x + h * e) - problem.smooth_value(x - h * e)) / (2 * h)
        for e in np.eye(problem.size)
    ])
    grad = problem.smooth_grad(x)
    assert np.linalg.norm(fd - grad) <= 1e-6 * np.linalg.norm(grad)


def test_prox_gradient_step_identity_example():
    """With A = I one step soft-thresholds x - delta (x - b)."""
    problem = CompositeProblem(A=np.eye(3), b=np.array([2.0, -0.05, 0.0]), lam=0.1)
    out = prox_gradient_step(problem, np.zeros(3), 1.0)
    assert np.allclose(out, [1.9, 0.0, 0.0])


def test_constructed_point_is_fixed():
    """A constructed minimizer is a fixed point of the prox-gradient step."""
    instance = _constructed()
    problem = instance.problem
    for delta in (_safe_delta(problem), 1e-3):
        step = prox_gradient_step(problem, instance.x_star, delta)
        assert np.linalg.norm(step - instance.x_star) <= 1e-8
    assert stationarity_residual(problem, instance.x_star) <= 1e-8


def test_ista_and_apg_objective_non_increasing():
    """ISTA and APG never increase the objective at a safe step."""
    problem = _random_problem()
    delta = _safe_delta(problem)
    for algo in (CompositeAlgorithm.ISTA, CompositeAlgorithm.APG):
        trace = run_composite(problem, CompositeSolverSpec(algorithm=algo, delta=delta, max_iters=300))
        assert _non_increasing([row.objective for row in trace.rows])


def test_momentum_prox_first_beta_and_fr_ratio():
    """The first step has no momentum; the second uses the FR gradient ratio."""
    problem = _random_problem()
    delta = _safe_delta(problem)
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.MOMENTUM_PROX, delta=delta, max_iters=2)
    trace = run_composite(problem, spec)
    assert trace.rows[1].beta is None
    x1 = run_composite(problem, dataclasses.replace(spec, max_iters=1)).final_x
    g0 = problem.smooth_grad(np.zeros(problem.size))
    g1 = problem.smooth_grad(x1)
    assert trace.rows[2].beta == pytest.approx(float(g1 @ g1) / float(g0 @ g0))


def test_momentum_prox_kinds_run():
    """Every momentum formula runs and labels its trace."""
    problem = _random_problem()
    delta = _safe_delta(problem)
    for kind in MomentumKind:
        spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.MOMENTUM_PROX, delta=delta,
                                   momentum_kind=kind, max_iters=50, cap_beta=True)
        trace = run_composite(problem, spec)
        assert trace.label == f"{kind.value.upper()}-prox"
        assert trace.iterations == 50 or trace.stop_reason != "max_iters"


def test_trace_columns():
    """alpha holds delta, norm holds the iterate change, rel_error uses x*."""
    problem = _random_problem()
    delta = _safe_delta(problem)
    trace = run_composite(problem, CompositeSolverSpec(algorithm=CompositeAlgorithm.FISTA, delta=delta,
                                                       max_iters=20, record_every=5))
    assert [row.iter for row in trace.rows] == [0, 5, 10, 15, 20]
    assert trace.rows[0].rel_error == pytest.approx(1.0)
    assert all(row.alpha == delta for row in trace.rows)
    assert trace.rows[0].norm == 0.0


def test_stop_tolerance():
    """A relative change below stop_tol ends the run."""
    problem = _random_problem()
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.ISTA, delta=_safe_delta(problem),
                               max_iters=100000, stop_tol=1e-6)
    trace = run_composite(problem, spec)
    assert trace.stop_reason == "tolerance"
    assert trace.iterations < 100000


def test_divergence_is_flagged():
    """A step far above 1/L diverges into a flagged row without raising."""
    problem = _random_problem()
    trace = run_composite(problem, CompositeSolverSpec(algorithm=CompositeAlgorithm.ISTA,
                                                       delta=100.0, max_iters=1000))
    assert trace.diverged
    assert not is_convergent(trace)


def test_dca_requires_l12():
    """DCA only applies to the l1 - l2 model."""
    problem = _random_problem()
    with pytest.raises(ValueError, match="l1-l2"):
        run_dca(problem, CompositeSolverSpec(algorithm=CompositeAlgorithm.DCA, delta=0.1))


def test_dca_first_subproblem_is_l1():
    """From x0 = 0 the first DCA subproblem is plain l1 solved by FISTA."""
    problem = _random_problem(reg=RegularizerKind.L1_MINUS_L2)
    l1 = CompositeProblem(A=problem.A, b=problem.b, lam=problem.lam, reg=RegularizerKind.L1)
    delta = _safe_delta(problem)
    dca = run_dca(problem, CompositeSolverSpec(algorithm=CompositeAlgorithm.DCA, delta=delta, max_iters=10))
    fista = run_composite(l1, CompositeSolverSpec(algorithm=CompositeAlgorithm.FISTA, delta=delta, max_iters=10))
    assert dca.iterations == 10
    assert np.allclose(dca.final_x, fista.final_x)


def test_dca_outer_objective_non_increasing():
    """Outer DCA objectives decrease when subproblems are solved accurately."""
    problem = _random_problem(reg=RegularizerKind.L1_MINUS_L2)
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.DCA, delta=_safe_delta(problem),
                               max_iters=20000, inner_max=5000, inner_tol=1e-12, stop_tol=1e-8)
    trace = run_solver(problem, spec)
    assert len(trace.outer_objectives) >= 2
    assert _non_increasing(trace.outer_objectives, slack=1e-6)
    assert trace.meta["outer_iterations"] == len(trace.outer_objectives) - 1


def test_tune_delta_records_every_grid_point():
    """The sweep reports each grid point and picks a convergent one."""
    problem = _random_problem()
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.FISTA, delta=1.0, max_iters=200)
    grid = (1e-3, 1e-2, 1e-1, 1e1)
    result = tune_delta(problem, spec, grid)
    assert set(result.finals) == set(grid)
    assert result.best in grid
    assert result.finals[1e1] is None
    lowest = min(v for v in result.finals.values() if v is not None)
    assert result.finals[result.best] <= lowest + 1e-12 * max(1.0, abs(lowest))
    assert result.trace.meta["spec"]["delta"] == result.best


def test_tune_delta_breaks_ties_towards_larger_step():
    """Runs that reach the same minimum to rounding resolve to the larger delta."""
    problem = CompositeProblem(A=np.eye(4), b=np.array([2.0, -1.0, 0.05, 0.5]), lam=0.1)
    spec = CompositeSolverSpec(algorithm=CompositeAlgorithm.ISTA, delta=1.0, max_iters=200)
    result = tune_delta(problem, spec, (1e-2, 0.5, 1.0, 10.0))
    assert result.finals[10.0] is None
    assert result.finals[1e-2] > result.finals[1.0]
    assert result.finals[0.5] == pytest.approx(result.finals[1.0], rel=1e-12, abs=1e-12)
    assert result.best == 1.0
    assert np.allclose(result.trace.final_x, [1.9, -0.9, 0.0, 0.4])


def test_tune_lambda_picks_from_grid():
    """Lambda tuning returns a grid value; all-divergent sweeps raise."""
    problem = _random_problem()
    result = tune_lambda(problem.with_lambda, (1e-2, 1e-1), delta=_safe_delta(problem), max_iters=100)
    assert result.best in (1e-2, 1e-1)
    with pytest.raises(RuntimeError, match="no convergent lambda"):
        tune_lambda(problem.with_lambda, (1e-2,), delta=100.0, max_iters=1000)
