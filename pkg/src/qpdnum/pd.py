"""Primal-dual updates, the quadratic transition matrix and error vectors.

States are arrays whose last axis indexes the variables, so the same code
advances one trajectory or a whole batch of Monte Carlo trials.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NotContractive, NotQuadratic, NumericError, ParamError
from .problem import Optimum, ValidatedProblem


@dataclass(frozen=True)
class PdState:
    x: np.ndarray
    lam: np.ndarray
    k: int = 0

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.x, self.lam], axis=-1)


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``mu(k)`` converging to ``mu_star``."""

    mu: Callable[[int], float]
    mu_star: float

    @classmethod
    def constant(cls, mu: float) -> "StepSchedule":
        mu = float(mu)
        if not mu > 0:
            raise ParamError(f"step size must be positive, got {mu}")
        return cls(lambda k: mu, mu)

    def check(self, vp: ValidatedProblem, horizon: int) -> None:
        """Raise ParamError if any mu(k), k < horizon, exceeds the step cap."""
        for k in range(horizon):
            m = self.mu(k)
            if not 0 < m <= vp.step_cap * (1 + 1e-12):
                raise ParamError(f"mu({k})={m} outside (0, {vp.step_cap}]")


@dataclass(frozen=True)
class TMatrix:
    entries: np.ndarray
    mu: float
    affine: np.ndarray

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def apply(self, y: np.ndarray) -> np.ndarray:
        return y @ self.entries.T + self.affine


@dataclass(frozen=True)
class Contraction:
    """Contraction constant of T.

    ``euclidean`` is False when ``||T||_2 >= 1`` and ``value`` is the spectral
    radius, i.e. T only contracts in some adapted norm.
    """

    value: float
    euclidean: bool
    spectral_radius: float
    norm2: float


@dataclass(frozen=True)
class ErrorVector:
    eps: np.ndarray
    M: int

    @property
    def eps_x(self) -> np.ndarray:
        return self.eps[..., : self.M]

    @property
    def eps_lambda(self) -> np.ndarray:
        return self.eps[..., self.M :]

    def sq_norms(self) -> tuple:
        """(||eps||^2, ||eps_x||^2, ||eps_lambda||^2) over the last axis."""
        ex = np.sum(np.square(self.eps_x), axis=-1)
        el = np.sum(np.square(self.eps_lambda), axis=-1)
        return ex + el, ex, el


def _guard(*arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite value in PD iterate")


def quantized_step(state: PdState, qx, qlambda, vp: ValidatedProblem, schedule: StepSchedule) -> PdState:
    """One synchronous PD step where each side sees the other's quantized values.

    Agent i uses its own exact x_i and the decoded duals; node j uses its
    own exact lambda_j and the decoded primals.
    """
    mu = schedule.mu(state.k)
    A = vp.a_matrix
    with np.errstate(invalid="ignore", over="ignore"):
        x = state.x + mu * (vp.gradient(state.x) - qlambda @ A)
        lam = state.lam + mu * (qx @ A.T - vp.b)
    _guard(x, lam)
    return PdState(x, lam, state.k + 1)


def unquantized_step(state: PdState, vp: ValidatedProblem, schedule: StepSchedule) -> PdState:
    return quantized_step(state, state.x, state.lam, vp, schedule)


def build_t_matrix(vp: ValidatedProblem, mu: float) -> TMatrix:
    """Linear part T and affine term ``mu*[c; -b]`` of the quadratic PD map."""
    if not vp.is_quadratic:
        raise NotQuadratic("T is only defined when every utility is quadratic")
    M, N = vp.M, vp.N
    A = vp.a_matrix
    T = np.zeros((M + N, M + N))
    T[:M, :M] = np.diag(1.0 - mu * vp.curvatures)
    T[:M, M:] = -mu * A.T
    T[M:, :M] = mu * A
    T[M:, M:] = np.eye(N)
    affine = mu * np.concatenate([vp.linear_terms, -vp.b])
    return TMatrix(T, float(mu), affine)


def contraction_constant(t) -> Contraction:
    """Euclidean contraction constant if there is one, else the spectral radius.

    Raises NotContractive when the spectral radius is >= 1.
    """
    T = t.entries if isinstance(t, TMatrix) else np.asarray(t, dtype=float)
    rho = float(np.max(np.abs(np.linalg.eigvals(T))))
    norm2 = float(np.linalg.norm(T, 2))
    if norm2 < 1.0:
        return Contraction(norm2, True, rho, norm2)
    if rho < 1.0:
        return Contraction(rho, False, rho, norm2)
    raise NotContractive(f"spectral radius {rho:.6g} >= 1")


def error_vector(state: PdState, opt: Optimum) -> ErrorVector:
    return ErrorVector(state.y - opt.y_star, len(opt.x_star))
