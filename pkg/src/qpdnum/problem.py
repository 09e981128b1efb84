"""NUM instances: utilities, validation of the standing assumptions, and the exact optimum.

The problem is

    maximize  sum_i U_i(x_i)   subject to  A x = b,

with ``A`` of shape (N, M), N < M.  Agent ``i`` owns ``x_i``; network node
``j`` owns the dual variable ``lambda_j`` of constraint ``j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (
    CurvatureError,
    DimensionError,
    NoConvergence,
    NumericError,
    RankError,
    SingularKkt,
)

QUADRATIC_TOL = 1e-10
NEWTON_TOL = 1e-8
NEWTON_MAX_ITER = 200
NEWTON_MIN_STEP = 2.0**-20
CURVATURE_GRID = 512


@dataclass(frozen=True)
class Quadratic:
    """U(x) = -(a/2) x**2 + c x + f with a > 0."""

    a: float
    c: float = 0.0
    f: float = 0.0

    def value(self, x):
        return -0.5 * self.a * np.square(x) + self.c * x + self.f

    def derivative(self, x):
        return -self.a * x + self.c

    def second_derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), -self.a)

    @property
    def curvature_bounds(self) -> tuple[float, float]:
        return -self.a, -self.a


@dataclass(frozen=True)
class GeneralConcave:
    """Strongly concave utility given through its first two derivatives.

    ``u_min <= U''(x) <= u_max < 0`` is declared by the caller and checked
    on a grid over ``domain`` during validation.
    """

    derivative_fn: Callable[[np.ndarray], np.ndarray]
    second_derivative_fn: Callable[[np.ndarray], np.ndarray]
    u_min: float
    u_max: float
    domain: tuple[float, float] = (-10.0, 10.0)

    def derivative(self, x):
        return self.derivative_fn(x)

    def second_derivative(self, x):
        return self.second_derivative_fn(x)

    @property
    def curvature_bounds(self) -> tuple[float, float]:
        return self.u_min, self.u_max

    @classmethod
    def from_quadratic(cls, q: Quadratic, domain=(-10.0, 10.0)) -> "GeneralConcave":
        a, c = float(q.a), float(q.c)
        return cls(
            derivative_fn=lambda x: -a * np.asarray(x, dtype=float) + c,
            second_derivative_fn=lambda x: np.full_like(np.asarray(x, dtype=float), -a),
            u_min=-a,
            u_max=-a,
            domain=domain,
        )


Utility = Union[Quadratic, GeneralConcave]


@dataclass(frozen=True)
class NumProblem:
    utilities: tuple
    a_matrix: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "utilities", tuple(self.utilities))
        object.__setattr__(self, "a_matrix", np.atleast_2d(np.asarray(self.a_matrix, dtype=float)))
        object.__setattr__(self, "b", np.atleast_1d(np.asarray(self.b, dtype=float)))

    @property
    def M(self) -> int:
        return len(self.utilities)

    @property
    def N(self) -> int:
        return self.a_matrix.shape[0]

    @classmethod
    def quadratic(cls, a: Sequence[float], c: Sequence[float] | None, a_matrix, b, f=None) -> "NumProblem":
        a = np.asarray(a, dtype=float)
        c = np.zeros_like(a) if c is None else np.asarray(c, dtype=float)
        f = np.zeros_like(a) if f is None else np.asarray(f, dtype=float)
        utils = tuple(Quadratic(float(ai), float(ci), float(fi)) for ai, ci, fi in zip(a, c, f))
        return cls(utils, a_matrix, b)


@dataclass(frozen=True)
class ValidatedProblem:
    """A NumProblem that passed :func:`validate`, with per-agent curvature bounds."""

    problem: NumProblem
    u_min: np.ndarray
    u_max: np.ndarray
    step_cap: float
    _quad: tuple | None = field(default=None, repr=False)

    @property
    def M(self) -> int:
        return self.problem.M

    @property
    def N(self) -> int:
        return self.problem.N

    @property
    def a_matrix(self) -> np.ndarray:
        return self.problem.a_matrix

    @property
    def b(self) -> np.ndarray:
        return self.problem.b

    @property
    def utilities(self) -> tuple:
        return self.problem.utilities

    @property
    def is_quadratic(self) -> bool:
        return self._quad is not None

    @property
    def curvatures(self) -> np.ndarray:
        """The ``a_i`` of a quadratic instance."""
        if self._quad is None:
            raise TypeError("curvatures are only defined for quadratic instances")
        return self._quad[0]

    @property
    def linear_terms(self) -> np.ndarray:
        if self._quad is None:
            raise TypeError("linear terms are only defined for quadratic instances")
        return self._quad[1]

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Per-agent U_i'(x_i) over the last axis of ``x``."""
        if self._quad is not None:
            a, c = self._quad
            return -a * x + c
        out = np.empty_like(x, dtype=float)
        for i, u in enumerate(self.utilities):
            out[..., i] = u.derivative(x[..., i])
        return out

    def second_derivative(self, x: np.ndarray) -> np.ndarray:
        if self._quad is not None:
            return np.broadcast_to(-self._quad[0], np.shape(x)).astype(float)
        out = np.empty_like(x, dtype=float)
        for i, u in enumerate(self.utilities):
            out[..., i] = u.second_derivative(x[..., i])
        return out


@dataclass(frozen=True)
class Optimum:
    x_star: np.ndarray
    lambda_star: np.ndarray
    stationarity: float
    feasibility: float

    @property
    def y_star(self) -> np.ndarray:
        return np.concatenate([self.x_star, self.lambda_star])


def validate(problem: NumProblem, grid_points: int = CURVATURE_GRID) -> ValidatedProblem:
    """Check N < M, full row rank and strong concavity; attach curvature bounds.

    The step cap is ``min_i 1/|u_min_i|``: every step size must stay at or
    below it for the PD map to remain invertible.
    """
    M, N = problem.M, problem.N
    A = problem.a_matrix
    if M == 0 or N == 0:
        raise DimensionError(f"need M >= 1 agents and N >= 1 constraints, got M={M}, N={N}")
    if N >= M:
        raise DimensionError(f"number of constraints N={N} must be smaller than M={M}")
    if A.shape != (N, M):
        raise DimensionError(f"A has shape {A.shape}, expected ({N}, {M})")
    if problem.b.shape != (N,):
        raise DimensionError(f"b has shape {problem.b.shape}, expected ({N},)")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(problem.b))):
        raise NumericError("A and b must be finite")
    rank = np.linalg.matrix_rank(A)
    if rank < N:
        raise RankError(f"A has rank {rank} < N={N}; dual optimum would not be unique")

    u_min = np.empty(M)
    u_max = np.empty(M)
    for i, u in enumerate(problem.utilities):
        if isinstance(u, Quadratic):
            if not (np.isfinite(u.a) and u.a > 0):
                raise CurvatureError(f"utility {i}: quadratic curvature a={u.a} must be positive")
        elif isinstance(u, GeneralConcave):
            if not (u.u_min <= u.u_max < 0):
                raise CurvatureError(
                    f"utility {i}: need u_min <= u_max < 0, got ({u.u_min}, {u.u_max})"
                )
            grid = np.linspace(u.domain[0], u.domain[1], grid_points)
            d2 = np.asarray(u.second_derivative(grid), dtype=float)
            slack = 1e-12 * max(1.0, abs(u.u_min))
            if np.any(d2 < u.u_min - slack) or np.any(d2 > u.u_max + slack):
                bad = grid[(d2 < u.u_min - slack) | (d2 > u.u_max + slack)][0]
                raise CurvatureError(
                    f"utility {i}: second derivative leaves [{u.u_min}, {u.u_max}] at x={bad}"
                )
        else:
            raise TypeError(f"utility {i}: unsupported type {type(u).__name__}")
        u_min[i], u_max[i] = u.curvature_bounds

    quad = None
    if all(isinstance(u, Quadratic) for u in problem.utilities):
        quad = (
            np.array([u.a for u in problem.utilities], dtype=float),
            np.array([u.c for u in problem.utilities], dtype=float),
        )
    step_cap = float(np.min(1.0 / np.abs(u_min)))
    return ValidatedProblem(problem, u_min, u_max, step_cap, quad)


def kkt_residuals(vp: ValidatedProblem, x, lam) -> tuple[float, float]:
    """(stationarity, feasibility) residuals in the infinity norm."""
    A = vp.a_matrix
    stat = np.max(np.abs(vp.gradient(np.asarray(x, dtype=float)) - A.T @ lam))
    feas = np.max(np.abs(A @ x - vp.b))
    return float(stat), float(feas)


def solve_optimum(vp: ValidatedProblem, tol: float | None = None, method: str = "auto") -> Optimum:
    """Exact primal/dual optimum.

    Quadratic instances go through one dense solve of the KKT system
    ``[diag(a) A^T; A 0] [x; lam] = [c; b]``.  Anything else (or
    ``method="newton"``) runs damped Newton on the KKT residual.
    """
    if method not in ("auto", "direct", "newton"):
        raise ValueError(f"unknown method {method!r}")
    if method == "direct" or (method == "auto" and vp.is_quadratic):
        return _solve_direct(vp, QUADRATIC_TOL if tol is None else tol)
    return _solve_newton(vp, NEWTON_TOL if tol is None else tol)


def _solve_direct(vp: ValidatedProblem, tol: float) -> Optimum:
    M, N = vp.M, vp.N
    A = vp.a_matrix
    K = np.zeros((M + N, M + N))
    K[:M, :M] = np.diag(vp.curvatures)
    K[:M, M:] = A.T
    K[M:, :M] = A
    rhs = np.concatenate([vp.linear_terms, vp.b])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKkt(str(exc)) from exc
    x, lam = sol[:M], sol[M:]
    stat, feas = kkt_residuals(vp, x, lam)
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(sol))))
    if not np.isfinite(sol).all() or max(stat, feas) > tol * scale:
        raise SingularKkt(f"KKT residual {max(stat, feas):.3e} above tolerance; system is ill-conditioned")
    return Optimum(x, lam, stat, feas)


def _newton_residual(vp, x, lam):
    return np.concatenate([vp.gradient(x) - vp.a_matrix.T @ lam, vp.a_matrix @ x - vp.b])


def _solve_newton(vp: ValidatedProblem, tol: float) -> Optimum:
    M, N = vp.M, vp.N
    A = vp.a_matrix
    x = np.zeros(M)
    lam = np.zeros(N)
    r = _newton_residual(vp, x, lam)
    for _ in range(NEWTON_MAX_ITER):
        if np.max(np.abs(r)) <= tol:
            break
        J = np.zeros((M + N, M + N))
        J[:M, :M] = np.diag(vp.second_derivative(x))
        J[:M, M:] = -A.T
        J[M:, :M] = A
        try:
            d = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise SingularKkt(str(exc)) from exc
        norm0 = np.linalg.norm(r)
        t = 1.0
        while True:
            xn, ln = x + t * d[:M], lam + t * d[M:]
            rn = _newton_residual(vp, xn, ln)
            if np.linalg.norm(rn) <= (1.0 - 1e-4 * t) * norm0 or np.max(np.abs(rn)) <= tol:
                break
            t *= 0.5
            if t < NEWTON_MIN_STEP:
                raise NoConvergence("line search failed to reduce the KKT residual")
        x, lam, r = xn, ln, rn
    else:
        if np.max(np.abs(r)) > tol:
            raise NoConvergence(f"Newton did not reach tol={tol} in {NEWTON_MAX_ITER} iterations")
    stat, feas = kkt_residuals(vp, x, lam)
    return Optimum(x, lam, stat, feas)
