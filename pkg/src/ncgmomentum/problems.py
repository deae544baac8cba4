"""Seeded generation of quadratic and sparse-recovery test instances.

Every generator is a pure function of its arguments and a 64-bit seed.
Random draws come from NumPy's Philox4x64-10 bit generator; each component
of an instance (matrix, support, amplitudes, noise) reads its own stream so
changing one size never shifts the draws of another component.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
import scipy.linalg

from .composite import CompositeProblem
from .constants import (
    CONSTRUCTION_MAX_ATTEMPTS,
    CONSTRUCTION_MAX_ITERS,
    CONSTRUCTION_TOL,
    DEFAULT_COLS,
    DEFAULT_LAMBDA,
    DEFAULT_ROWS,
    DEFAULT_SEED,
    DEFAULT_SNR_DB,
    DEFAULT_SPARSITY,
    PRNG_NAME,
    SPARSE_AMPLITUDE_FLOOR,
)
from .linalg import (
    DenseMatrix,
    DimensionError,
    Vector,
    as_matrix,
    as_vector,
    least_squares_solve,
    matvec,
    norm2,
    orthonormal_range_basis,
)
from .prox import RegularizerKind
from .smooth import QuadraticProblem

logger = logging.getLogger(__name__)

SEED_LIMIT = 2**64

# PRNG streams
_STREAM_MATRIX = 1
_STREAM_SUPPORT = 2
_STREAM_AMPLITUDE = 3
_STREAM_NOISE = 4
_STREAM_SPD = 5


class ConstructionError(RuntimeError):
    """Raised when no seed yields a converged stationary-point construction."""
    pass


def _check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    if not 0 <= int(seed) < SEED_LIMIT:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """
    Philox4x64-10 generator for (seed, stream).

    Args:
        seed: 64-bit unsigned seed
        stream: Component index; distinct streams are independent

    Returns:
        numpy Generator backed by Philox
    """
    seq = np.random.SeedSequence([_check_seed(seed), stream])
    return np.random.Generator(np.random.Philox(seq))


def circular_graph_laplacian(n: int) -> DenseMatrix:
    """
    Laplacian of the n-cycle: 2 on the diagonal, -1 on both off-diagonals
    and in the two corners.

    Raises:
        ValueError: If n < 3
    """
    if n < 3:
        raise ValueError(f"circular graph needs at least 3 nodes, got {n}")
    L = 2.0 * np.eye(n)
    idx = np.arange(n)
    L[idx, (idx + 1) % n] = -1.0
    L[(idx + 1) % n, idx] = -1.0
    return L


def laplacian_quadratic(n: int, centered: bool = True) -> QuadraticProblem:
    """
    Quadratic on the circular-graph Laplacian with linear term built from e_1.

    The raw problem b = e_1 has no minimizer because e_1 is not in the
    range of L. The centered problem uses b = -(e_1 - 1/n) and carries the
    minimum-norm minimizer L^+ (e_1 - 1/n) as ground truth.
    """
    L = circular_graph_laplacian(n)
    e1 = np.zeros(n)
    e1[0] = 1.0
    if not centered:
        return QuadraticProblem(A=L, b=e1)
    c = e1 - 1.0 / n
    x_star = least_squares_solve(L, c)
    return QuadraticProblem(A=L, b=-c, ground_truth=x_star)


def random_spd_quadratic(n: int, seed: int, singular: bool = False) -> QuadraticProblem:
    """
    Random quadratic with A = G'G/n + I and standard normal b.

    With singular=True the identity shift is dropped and one row of G is
    zeroed, so A is positive semidefinite with a nontrivial null space.
    """
    if n < 1:
        raise ValueError(f"matrix size must be positive, got {n}")
    rng = make_rng(seed, _STREAM_SPD)
    G = rng.standard_normal((n, n))
    b = rng.standard_normal(n)
    if singular:
        G[-1, :] = 0.0
        A = G.T @ G / n
        return QuadraticProblem(A=0.5 * (A + A.T), b=b)
    A = G.T @ G / n + np.eye(n)
    A = 0.5 * (A + A.T)
    x_star = scipy.linalg.solve(A, -b, assume_a="pos")
    return QuadraticProblem(A=A, b=b, ground_truth=x_star)


def gaussian_sensing_matrix(m: int, n: int, seed: int) -> DenseMatrix:
    """m x n matrix of i.i.d. N(0, 1/m) entries."""
    if m < 1 or n < 1:
        raise ValueError(f"matrix dimensions must be positive, got {m}x{n}")
    rng = make_rng(seed, _STREAM_MATRIX)
    return rng.standard_normal((m, n)) / np.sqrt(m)


def sparse_signal(n: int, s: int, seed: int) -> Vector:
    """
    Vector of length n with exactly s nonzeros.

    The support is drawn uniformly without replacement. Amplitudes are
    standard normal, redrawn until every magnitude is at least
    SPARSE_AMPLITUDE_FLOOR.
    """
    if not 1 <= s <= n:
        raise ValueError(f"sparsity must be in [1, {n}], got {s}")
    support = make_rng(seed, _STREAM_SUPPORT).choice(n, size=s, replace=False)
    rng = make_rng(seed, _STREAM_AMPLITUDE)
    values = rng.standard_normal(s)
    small = np.abs(values) < SPARSE_AMPLITUDE_FLOOR
    while np.any(small):
        values[small] = rng.standard_normal(int(np.count_nonzero(small)))
        small = np.abs(values) < SPARSE_AMPLITUDE_FLOOR
    x = np.zeros(n)
    x[support] = values
    return x


def add_noise_snr(clean: Vector, snr_db: float, seed: int) -> Vector:
    """
    Add seeded Gaussian noise scaled to an exact signal-to-noise ratio.

    The noise n satisfies 20 log10(||clean|| / ||n||) = snr_db.

    Raises:
        ValueError: If clean is the zero vector
    """
    clean = as_vector(clean, "clean")
    signal = norm2(clean)
    if signal == 0.0:
        raise ValueError("cannot calibrate noise against a zero signal")
    noise = make_rng(seed, _STREAM_NOISE).standard_normal(clean.shape[0])
    target = signal * 10.0 ** (-snr_db / 20.0)
    return clean + noise * (target / norm2(noise))


def sign_projection(v: Vector, x_star: Vector) -> Vector:
    """
    Euclidean projection of v onto the multi-valued sign set of x*.

    Coordinates on the support of x* are pinned to sign(x*); the rest are
    clamped into [-1, 1].
    """
    if v.shape != x_star.shape:
        raise DimensionError(f"sign projection of lengths {v.shape[0]} and {x_star.shape[0]}")
    return np.where(x_star != 0, np.sign(x_star), np.clip(v, -1.0, 1.0))


@dataclass(frozen=True)
class Construction:
    """Right-hand side making x* stationary, with the certificate w behind it."""

    b: Vector
    w: Vector
    converged: bool
    residual: float
    iterations: int


def _alternating_projection(
    A: DenseMatrix, x_star: Vector, shift: Optional[Vector], max_iters: int, tol: float
):
    U = orthonormal_range_basis(A.T)
    c = np.zeros_like(x_star) if shift is None else shift
    w = sign_projection(np.zeros_like(x_star), x_star)
    gap = float("inf")
    k = 0
    for k in range(1, max_iters + 1):
        d = w - c
        proj = U @ (U.T @ d)
        gap = norm2(d - proj)
        if gap <= tol:
            break
        w = sign_projection(proj + c, x_star)
    return w, gap, k


def _construct(A, lam: float, x_star, shift_by_direction: bool, max_iters: int, tol: float) -> Construction:
    A = as_matrix(A, "A")
    x_star = as_vector(x_star, "x_star")
    if A.shape[1] != x_star.shape[0]:
        raise DimensionError(f"x* of length {x_star.shape[0]} for {A.shape[0]}x{A.shape[1]} matrix")
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    x_norm = norm2(x_star)
    if x_norm == 0.0:
        raise ValueError("construction needs a nonzero x*")
    if max_iters < 1:
        raise ValueError("max_iters must be positive")

    shift = x_star / x_norm if shift_by_direction else None
    w, gap, k = _alternating_projection(A, x_star, shift, max_iters, tol)
    converged = gap <= tol
    target = w if shift is None else w - shift
    y = least_squares_solve(A.T, target)
    b = lam * y + matvec(A, x_star)
    if converged:
        logger.debug("construction converged in %d iterations (gap %.3e)", k, gap)
    else:
        logger.warning("construction did not converge in %d iterations (gap %.3e)", k, gap)
    return Construction(b=b, w=w, converged=converged, residual=gap, iterations=k)


def construct_l1_rhs(
    A: DenseMatrix,
    lam: float,
    x_star: Vector,
    max_iters: int = CONSTRUCTION_MAX_ITERS,
    tol: float = CONSTRUCTION_TOL,
) -> Construction:
    """
    Build b so that x* is a stationary point of 1/2||Ax - b||^2 + lam ||x||_1.

    Alternates between the sign set of x* and Range(A') starting from the
    projection of zero onto the sign set. Once w lies in both, A'y = w is
    solved in the least-squares sense and b = lam y + A x*.

    Args:
        A: Sensing matrix
        lam: Regularization weight (> 0)
        x_star: Nonzero target point
        max_iters: Projection budget
        tol: Distance from w to Range(A') accepted as convergence

    Returns:
        Construction; converged is False when the budget ran out
    """
    return _construct(A, lam, x_star, False, max_iters, tol)


def construct_l12_rhs(
    A: DenseMatrix,
    lam: float,
    x_star: Vector,
    max_iters: int = CONSTRUCTION_MAX_ITERS,
    tol: float = CONSTRUCTION_TOL,
) -> Construction:
    """
    Build b so that x* is a stationary point of the l1 - l2 model.

    Same alternating scheme as construct_l1_rhs, with Range(A') shifted by
    x*/||x*||. The intersection may be empty, in which case the result is
    reported as not converged.
    """
    return _construct(A, lam, x_star, True, max_iters, tol)


def construct_rhs(
    kind: RegularizerKind,
    A: DenseMatrix,
    lam: float,
    x_star: Vector,
    max_iters: int = CONSTRUCTION_MAX_ITERS,
    tol: float = CONSTRUCTION_TOL,
) -> Construction:
    """Dispatch to the construction for kind."""
    if kind is RegularizerKind.L1:
        return construct_l1_rhs(A, lam, x_star, max_iters, tol)
    return construct_l12_rhs(A, lam, x_star, max_iters, tol)


class ProblemFamily(str, Enum):
    QUAD_LAPLACIAN = "quad_laplacian"
    SPARSE_RANDOM = "sparse_random"
    SPARSE_CONSTRUCTED = "sparse_constructed"


@dataclass(frozen=True)
class ProblemRecipe:
    """
    Everything needed to regenerate an instance bit for bit.

    For QUAD_LAPLACIAN only cols (the graph size) is used.
    """

    family: ProblemFamily
    rows: int = DEFAULT_ROWS
    cols: int = DEFAULT_COLS
    sparsity: int = DEFAULT_SPARSITY
    snr_db: float = DEFAULT_SNR_DB
    lam: float = DEFAULT_LAMBDA
    seed: int = DEFAULT_SEED
    reg: RegularizerKind = RegularizerKind.L1

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"dimensions must be positive, got {self.rows}x{self.cols}")
        if not 1 <= self.sparsity <= self.cols:
            raise ValueError(f"sparsity must be in [1, {self.cols}], got {self.sparsity}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        _check_seed(self.seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "family": self.family.value,
            "rows": self.rows,
            "cols": self.cols,
            "sparsity": self.sparsity,
            "snr_db": float(self.snr_db),
            "lambda": float(self.lam),
            "seed": int(self.seed),
            "reg": self.reg.value,
            "prng": PRNG_NAME,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ProblemRecipe":
        return cls(
            family=ProblemFamily(data["family"]),
            rows=int(data["rows"]),
            cols=int(data["cols"]),
            sparsity=int(data["sparsity"]),
            snr_db=float(data["snr_db"]),
            lam=float(data["lambda"]),
            seed=int(data["seed"]),
            reg=RegularizerKind(data["reg"]),
        )

    def fingerprint(self) -> str:
        """SHA256 hex digest of the canonical JSON form."""
        content = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(content).hexdigest()

    def with_lambda(self, lam: float) -> "ProblemRecipe":
        return replace(self, lam=lam)

    def with_seed(self, seed: int) -> "ProblemRecipe":
        return replace(self, seed=seed)


def short_fingerprint(digest: str) -> str:
    """first6...last6 form of a hex digest for console output."""
    return f"{digest[:6]}...{digest[-6:]}"


@dataclass
class SparseInstance:
    """A generated sparse-recovery problem and how it was obtained."""

    recipe: ProblemRecipe
    problem: CompositeProblem
    x_star: Vector
    construction: Optional[Construction] = None
    attempts: int = 1

    @property
    def seed_used(self) -> int:
        return self.recipe.seed


def build_quadratic(recipe: ProblemRecipe, centered: bool = True) -> QuadraticProblem:
    """Circular-graph Laplacian quadratic of size recipe.cols."""
    if recipe.family is not ProblemFamily.QUAD_LAPLACIAN:
        raise ValueError(f"not a quadratic recipe: {recipe.family.value}")
    return laplacian_quadratic(recipe.cols, centered=centered)


def _sparse_attempt(recipe: ProblemRecipe) -> SparseInstance:
    A = gaussian_sensing_matrix(recipe.rows, recipe.cols, recipe.seed)
    x_star = sparse_signal(recipe.cols, recipe.sparsity, recipe.seed)
    if recipe.family is ProblemFamily.SPARSE_RANDOM:
        b = add_noise_snr(matvec(A, x_star), recipe.snr_db, recipe.seed)
        problem = CompositeProblem(A=A, b=b, lam=recipe.lam, reg=recipe.reg, ground_truth=x_star)
        return SparseInstance(recipe=recipe, problem=problem, x_star=x_star)
    construction = construct_rhs(recipe.reg, A, recipe.lam, x_star)
    problem = CompositeProblem(A=A, b=construction.b, lam=recipe.lam, reg=recipe.reg, ground_truth=x_star)
    return SparseInstance(recipe=recipe, problem=problem, x_star=x_star, construction=construction)


def build_sparse_instance(recipe: ProblemRecipe, max_attempts: int = CONSTRUCTION_MAX_ATTEMPTS) -> SparseInstance:
    """
    Generate a sparse-recovery instance from recipe.

    Constructed recipes whose alternating projection does not converge are
    retried with seed + 1, seed + 2, ... The returned instance carries the
    recipe with the seed that succeeded.

    Raises:
        ValueError: If recipe is not a sparse family
        ConstructionError: If max_attempts seeds all fail to converge
    """
    if recipe.family is ProblemFamily.QUAD_LAPLACIAN:
        raise ValueError("quadratic recipes are built with build_quadratic")
    last: Optional[Construction] = None
    for attempt in range(max_attempts):
        current = recipe.with_seed((recipe.seed + attempt) % SEED_LIMIT)
        instance = _sparse_attempt(current)
        if instance.construction is None or instance.construction.converged:
            instance.attempts = attempt + 1
            logger.debug("built %s instance with seed %d", current.family.value, current.seed)
            return instance
        last = instance.construction
        logger.warning("seed %d: construction failed, regenerating", current.seed)
    residual = last.residual if last is not None else float("nan")
    raise ConstructionError(
        f"{recipe.reg.value} construction did not converge for seeds {recipe.seed}.."
        f"{recipe.seed + max_attempts - 1} (last residual {residual:.3e})"
    )


def instance_to_json(instance: SparseInstance) -> str:
    """
    Serialize an instance; floats keep their shortest round-trip form.
    """
    problem = instance.problem
    doc = {
        "family": instance.recipe.family.value,
        "dims": [problem.A.shape[0], problem.A.shape[1]],
        "seed": instance.recipe.seed,
        "lambda": problem.lam,
        "reg": problem.reg.value,
        "recipe": instance.recipe.to_dict(),
        "matrix": problem.A.tolist(),
        "b": problem.b.tolist(),
        "x_star": instance.x_star.tolist(),
    }
    return json.dumps(doc, indent=None)


def instance_from_json(text: str) -> SparseInstance:
    """
    Rebuild an instance written by instance_to_json.

    Raises:
        ValueError: If the document is malformed or its dims disagree with the arrays
    """
    try:
        doc = json.loads(text)
        recipe = ProblemRecipe.from_dict(doc["recipe"])
        A = np.asarray(doc["matrix"], dtype=np.float64)
        b = np.asarray(doc["b"], dtype=np.float64)
        x_star = np.asarray(doc["x_star"], dtype=np.float64)
        dims = tuple(doc["dims"])
        lam = float(doc["lambda"])
        reg = RegularizerKind(doc["reg"])
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ValueError(f"malformed instance document: {e}") from e
    if A.shape != dims:
        raise ValueError(f"instance dims {dims} do not match matrix shape {A.shape}")
    problem = CompositeProblem(A=A, b=b, lam=lam, reg=reg, ground_truth=x_star)
    return SparseInstance(recipe=recipe, problem=problem, x_star=x_star)
