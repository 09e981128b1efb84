"""Lower bounds on the convergence of quantized PD iterations.

All quantities are in nats.  Asymptotic bounds are on the distance decay
exponent (DDE), ``liminf (1/k) ln E||eps_k||^2``; finite-time bounds are on
``ln E||eps_k||^2`` itself.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ParamError
from .pd import StepSchedule, TMatrix
from .problem import Optimum, ValidatedProblem
from .quantize import LN2, RateLedger, RateSummary


@dataclass(frozen=True)
class InitialDistribution:
    """Independent initial primals and duals with known differential entropies.

    ``uniform_box`` draws every coordinate uniformly on ``(-L*alpha, L*alpha)``.
    """

    kind: str
    L: int | None = None
    alpha: float | None = None
    h_x0: float | None = None
    h_lambda0: float | None = None

    @classmethod
    def uniform_box(cls, L: int, alpha: float) -> "InitialDistribution":
        if not (L >= 1 and alpha > 0):
            raise ParamError(f"need L >= 1 and alpha > 0, got L={L}, alpha={alpha}")
        return cls("uniform-box", int(L), float(alpha))

    @classmethod
    def custom(cls, h_x0: float, h_lambda0: float) -> "InitialDistribution":
        if not (math.isfinite(h_x0) and math.isfinite(h_lambda0)):
            raise ParamError("initial entropies must be finite")
        return cls("custom", h_x0=float(h_x0), h_lambda0=float(h_lambda0))

    @property
    def half_width(self) -> float:
        return self.L * self.alpha

    def h_x(self, M: int) -> float:
        if self.kind == "uniform-box":
            return entropy_uniform_box(M, self.L, self.alpha)
        return self.h_x0

    def h_lambda(self, N: int) -> float:
        if self.kind == "uniform-box":
            return entropy_uniform_box(N, self.L, self.alpha)
        return self.h_lambda0

    def h_y(self, M: int, N: int) -> float:
        # x0 and lambda0 are independent
        return self.h_x(M) + self.h_lambda(N)


def entropy_uniform_box(dims: int, L: int, alpha: float) -> float:
    """Differential entropy of the uniform law on (-L alpha, L alpha)^dims."""
    if dims < 1 or L <= 0 or alpha <= 0:
        raise ParamError(f"need dims >= 1, L > 0, alpha > 0; got {dims}, {L}, {alpha}")
    return dims * math.log(2.0 * L * alpha)


def _log_contraction(vp: ValidatedProblem, mu: float, curvature: np.ndarray) -> float:
    arg = 1.0 + mu * curvature
    if np.any(arg <= 0):
        raise DomainError(f"1 + mu*u'' <= 0 for mu={mu}; step size violates the step cap")
    return float(np.sum(np.log(arg)))


def curvature_term(vp: ValidatedProblem, opt: Optimum, mu_star: float) -> float:
    """sum_i ln(1 + mu* U_i''(x*_i))."""
    return _log_contraction(vp, mu_star, vp.second_derivative(np.asarray(opt.x_star)))


def dde_bound_pd(vp: ValidatedProblem, opt: Optimum, mu_star: float, r_q: float) -> float:
    _check_rate(r_q)
    d = vp.M + vp.N
    return 2.0 / d * (curvature_term(vp, opt, mu_star) - r_q)


def dde_bound_primal(vp: ValidatedProblem, opt: Optimum, mu_star: float, r_lambda: float) -> float:
    _check_rate(r_lambda)
    return 2.0 / vp.M * (curvature_term(vp, opt, mu_star) - r_lambda)


def dde_bound_dual(n_constraints: int, r_x: float) -> float:
    _check_rate(r_x)
    return -2.0 / n_constraints * r_x


def dde_bound_zoomin(t, beta_t: int) -> float:
    """-(2/d) ln(beta_T / prod |T_ii|) for any zoom-in scheme on a quadratic NUM."""
    T = getattr(t, "entries", t)
    diag = np.abs(np.diag(np.asarray(T, dtype=float)))
    if np.any(diag == 0):
        raise DomainError("T has a zero diagonal entry")
    if beta_t < 1:
        raise DomainError(f"beta_T must be >= 1, got {beta_t}")
    d = len(diag)
    return -2.0 / d * (math.log(beta_t) - float(np.sum(np.log(diag))))


def dde_bound_combined(vp: ValidatedProblem, t: TMatrix, beta_t: int, r_q: float) -> float:
    """Quadratic-case merge of the rate bound and the lattice bound.

    The rate term saturates at ``ln beta_T``: past that, extra bits cannot
    buy faster convergence.
    """
    _check_rate(r_q)
    d = vp.M + vp.N
    curv = _log_contraction(vp, t.mu, -vp.curvatures)
    return 2.0 / d * (curv - min(math.log(beta_t), r_q))


def _check_rate(r):
    if not (r >= 0 and math.isfinite(r)):
        raise DomainError(f"rate must be finite and nonnegative, got {r}")


# ---------------------------------------------------------------- finite time


def _entropy_power_const(d: int) -> float:
    # ln( e^{1 - 1/d} / (2 pi e) )
    return (1.0 - 1.0 / d) - math.log(2.0 * math.pi * math.e)


def _curvature_path(vp: ValidatedProblem, schedule: StepSchedule, K: int) -> np.ndarray:
    """c[k] = sum_i sum_{n<k} ln(1 + mu_n u_min_i) for k = 0..K."""
    out = np.zeros(K + 1)
    for n in range(K):
        out[n + 1] = out[n] + _log_contraction(vp, schedule.mu(n), vp.u_min)
    return out


def msd_bound_curves(
    K: int,
    vp: ValidatedProblem,
    schedule: StepSchedule,
    init: InitialDistribution,
    ledger: RateLedger,
) -> dict[str, np.ndarray]:
    """Lower bounds on ln E||eps_k||^2 (pd, primal, dual) for k = 0..K.

    The primal curve is charged the dual bits and the dual curve the
    primal bits, since each side only learns the other through them.
    """
    M, N = vp.M, vp.N
    curv = _curvature_path(vp, schedule, K)
    nats_x, nats_l = ledger.cumulative_nats_curve(K)
    h_x, h_l = init.h_x(M), init.h_lambda(N)
    d = M + N
    pd = _entropy_power_const(d) + 2.0 / d * (curv + h_x + h_l - (nats_x + nats_l))
    primal = _entropy_power_const(M) + 2.0 / M * (curv + h_x - nats_l)
    dual = _entropy_power_const(N) + 2.0 / N * (h_l - nats_x) + np.zeros(K + 1)
    return {"pd": pd, "primal": primal, "dual": dual}


def msd_bound_pd(k, vp, schedule, init, ledger) -> float:
    return float(msd_bound_curves(k, vp, schedule, init, ledger)["pd"][k])


def msd_bound_primal(k, vp, schedule, init, ledger) -> float:
    return float(msd_bound_curves(k, vp, schedule, init, ledger)["primal"][k])


def msd_bound_dual(k, vp, schedule, init, ledger) -> float:
    return float(msd_bound_curves(k, vp, schedule, init, ledger)["dual"][k])


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class BoundReport:
    dde_pd: float
    dde_primal: float
    dde_dual: float
    dde_zoomin: float | None = None
    dde_combined: float | None = None
    beta_t: int | None = None
    beta_t_exact: bool | None = None

    _DDE_FIELDS = ("dde_pd", "dde_primal", "dde_dual", "dde_zoomin", "dde_combined")

    def in_bits(self) -> dict[str, float | None]:
        """The DDE values expressed with base-2 logarithms."""
        return {f: (None if getattr(self, f) is None else getattr(self, f) / LN2) for f in self._DDE_FIELDS}

    def as_dict(self) -> dict:
        out = {}
        for f in self._DDE_FIELDS:
            out[f"{f}_nats"] = getattr(self, f)
        for f, v in self.in_bits().items():
            out[f"{f}_log2"] = v
        out["beta_t"] = self.beta_t
        out["beta_t_exact"] = self.beta_t_exact
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_dict().items())

    def csv_header(self) -> str:
        return ",".join(self.as_dict()) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(_fmt(v) for v in self.as_dict().values()) + "\n"


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def bound_report(
    vp: ValidatedProblem,
    opt: Optimum,
    mu_star: float,
    rates: RateSummary,
    t: TMatrix | None = None,
    beta_t: int | None = None,
    beta_exact: bool | None = None,
) -> BoundReport:
    """Evaluate every applicable DDE bound for one instance and one rate triple."""
    zoom = comb = None
    if t is not None and beta_t is not None:
        zoom = dde_bound_zoomin(t, beta_t)
        comb = dde_bound_combined(vp, t, beta_t, rates.r_q)
    return BoundReport(
        dde_pd=dde_bound_pd(vp, opt, mu_star, rates.r_q),
        dde_primal=dde_bound_primal(vp, opt, mu_star, rates.r_lambda),
        dde_dual=dde_bound_dual(vp.N, rates.r_x),
        dde_zoomin=zoom,
        dde_combined=comb,
        beta_t=beta_t,
        beta_t_exact=beta_exact,
    )
