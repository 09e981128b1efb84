"""Monte Carlo harness for quantized PD trajectories.

Trials are simulated in fixed-size blocks of consecutive trial indices,
vectorised across the block.  Each trial draws its initial point from its
own Philox stream keyed by ``(seed, trial_index)``, so a trajectory does
not depend on which block it lands in or how many workers run.  Block
statistics are merged in block order, which keeps results identical for
any worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bounds as bnd
from .errors import IntervalViolation, NotContractive, NumericError, ParamError, QpdError
from .lattice import DEFAULT_BUDGET, build_box, count_exact, count_upper
from .pd import PdState, StepSchedule, build_t_matrix, contraction_constant, quantized_step
from .problem import NumProblem, Optimum, ValidatedProblem, solve_optimum, validate
from .quantize import QaScheme, RateLedger, Symbols, rate_summary

BLOCK = 1024
SIGMA_SLACK = 3.0


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ValidatedProblem
    scheme: object
    schedule: StepSchedule
    init: bnd.InitialDistribution
    steps: int
    trials: int
    seed: int = 0
    count_offset_bits: bool = False
    record_traces: bool = False
    tail_fraction: float = 0.5

    def __post_init__(self):
        if self.steps < 1 or self.trials < 1:
            raise ParamError(f"need steps >= 1 and trials >= 1, got {self.steps}, {self.trials}")
        if self.init.kind != "uniform-box":
            raise ParamError("simulation needs a uniform-box initial distribution to sample from")
        if not 0 < self.tail_fraction <= 1:
            raise ParamError(f"tail_fraction must lie in (0, 1], got {self.tail_fraction}")
        self.schedule.check(self.problem, self.steps)


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(trial_index)])))


def sample_initial(cfg: ExperimentConfig, indices) -> tuple[np.ndarray, np.ndarray]:
    """x0 of shape (n, M) and lambda0 of shape (n, N), uniform on (-w, w)."""
    M, N = cfg.problem.M, cfg.problem.N
    w = cfg.init.half_width
    y0 = np.empty((len(indices), M + N))
    for row, idx in enumerate(indices):
        y0[row] = trial_rng(cfg.seed, idx).uniform(-w, w, M + N)
    return y0[:, :M], y0[:, M:]


@dataclass
class BatchResult:
    indices: np.ndarray
    sq_pd: np.ndarray       # (K+1, n)
    sq_x: np.ndarray
    sq_lambda: np.ndarray
    bits_x: np.ndarray      # (K, M), identical across the batch
    bits_lambda: np.ndarray  # (K, N)
    max_offset: float
    traces: tuple | None = None


def simulate_batch(cfg: ExperimentConfig, opt: Optimum, indices) -> BatchResult:
    """Run the quantized iteration for a block of trials in lockstep."""
    indices = np.asarray(indices, dtype=np.int64)
    vp = cfg.problem
    M, N, K = vp.M, vp.N, cfg.steps
    n = len(indices)
    x, lam = sample_initial(cfg, indices)
    enc_x, dec_x = cfg.scheme.encoder((n, M)), cfg.scheme.decoder((n, M))
    enc_l, dec_l = cfg.scheme.encoder((n, N)), cfg.scheme.decoder((n, N))
    sq_x = np.empty((K + 1, n))
    sq_l = np.empty((K + 1, n))
    bits_x = np.empty((K, M))
    bits_l = np.empty((K, N))
    max_off = 0.0
    trace_x: list[Symbols] = []
    trace_l: list[Symbols] = []
    xs, ls = opt.x_star, opt.lambda_star
    state = PdState(x, lam, 0)
    sq_x[0] = np.sum(np.square(x - xs), axis=1)
    sq_l[0] = np.sum(np.square(lam - ls), axis=1)
    for k in range(K):
        sx = enc_x.encode(state.x)
        sl = enc_l.encode(state.lam)
        qx = dec_x.decode(sx)
        ql = dec_l.decode(sl)
        bits_x[k] = sx.bits
        bits_l[k] = sl.bits
        if k > 0:
            max_off = max(max_off, float(np.max(np.abs(sx.offset))), float(np.max(np.abs(sl.offset))))
        if cfg.record_traces:
            trace_x.append(sx)
            trace_l.append(sl)
        state = quantized_step(state, qx, ql, vp, cfg.schedule)
        sq_x[k + 1] = np.sum(np.square(state.x - xs), axis=1)
        sq_l[k + 1] = np.sum(np.square(state.lam - ls), axis=1)
    traces = (trace_x, trace_l) if cfg.record_traces else None
    return BatchResult(indices, sq_x + sq_l, sq_x, sq_l, bits_x, bits_l, max_off, traces)


def offset_bits(max_offset: float) -> int:
    """ceil(log2(2*cap + 1)) bits to send an offset integer in [-cap, cap]."""
    cap = int(max_offset)
    return int(math.ceil(math.log2(2 * cap + 1))) if cap > 0 else 0


def build_ledger(vp: ValidatedProblem, bits_x, bits_lambda, extra_offset_bits: int = 0) -> RateLedger:
    ledger = RateLedger(vp.M, vp.N)
    for bx, bl in zip(bits_x, bits_lambda):
        ledger.record(bx, bl)
    if extra_offset_bits:
        ledger.add_bits(extra_offset_bits, extra_offset_bits, from_step=1)
    return ledger


# ---------------------------------------------------------------- single trial


@dataclass
class TrialResult:
    trial_index: int
    sq_pd: np.ndarray
    sq_x: np.ndarray
    sq_lambda: np.ndarray
    ledger: RateLedger
    traces: tuple | None = None

    @property
    def dist(self) -> np.ndarray:
        return np.sqrt(self.sq_pd)


def run_trial(cfg: ExperimentConfig, trial_index: int, opt: Optimum | None = None) -> TrialResult:
    """One trajectory; bit-identical to the same trial inside :func:`monte_carlo`."""
    opt = solve_optimum(cfg.problem) if opt is None else opt
    try:
        b = simulate_batch(cfg, opt, [trial_index])
    except IntervalViolation as exc:
        raise IntervalViolation(f"trial {trial_index}: {exc}", step=exc.step) from exc
    extra = offset_bits(b.max_offset) if cfg.count_offset_bits else 0
    ledger = build_ledger(cfg.problem, b.bits_x, b.bits_lambda, extra)
    return TrialResult(trial_index, b.sq_pd[:, 0], b.sq_x[:, 0], b.sq_lambda[:, 0], ledger, b.traces)


# ---------------------------------------------------------------- statistics


@dataclass
class _Moments:
    """Running mean and sum of squared deviations, merged in a fixed order."""

    n: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def of(cls, samples: np.ndarray) -> "_Moments":
        # samples: (K+1, n)
        n = samples.shape[1]
        mean = samples.mean(axis=1)
        m2 = np.sum(np.square(samples - mean[:, None]), axis=1)
        return cls(n, mean, m2)

    def merge(self, other: "_Moments") -> "_Moments":
        if self.n == 0:
            return other
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.n / n)
        m2 = self.m2 + other.m2 + np.square(delta) * (self.n * other.n / n)
        return _Moments(n, mean, m2)

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.mean, np.inf)
        return np.sqrt(self.m2 / (self.n - 1) / self.n)


@dataclass
class MsdCurves:
    msd_pd: np.ndarray
    msd_primal: np.ndarray
    msd_dual: np.ndarray
    stderr_pd: np.ndarray
    stderr_primal: np.ndarray
    stderr_dual: np.ndarray
    n_trials: int

    @property
    def steps(self) -> int:
        return len(self.msd_pd) - 1

    @property
    def wide_stderr(self) -> bool:
        """True when the standard errors are not estimable (fewer than 2 trials)."""
        return self.n_trials < 2

    @property
    def dde_empirical(self) -> np.ndarray:
        """(1/k) ln msd_pd[k]; NaN at k = 0."""
        k = np.arange(len(self.msd_pd), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.log(self.msd_pd) / k
        out[0] = np.nan
        return out

    def log_stderr(self, flavor: str) -> np.ndarray:
        """Delta-method standard error of ln msd."""
        msd = getattr(self, f"msd_{flavor}")
        se = getattr(self, f"stderr_{flavor}")
        with np.errstate(divide="ignore", invalid="ignore"):
            return se / msd


def empirical_dde(curves: MsdCurves, tail_fraction: float = 0.5) -> float:
    """Mean of (1/k) ln msd_pd[k] over the last ``tail_fraction`` of the steps."""
    dde = curves.dde_empirical
    K = len(dde) - 1
    start = max(1, int(math.floor(K * (1.0 - tail_fraction))))
    return float(np.mean(dde[start:]))


# ---------------------------------------------------------------- monte carlo


@dataclass
class Violation:
    curve: str
    k: int | None
    value: float
    bound: float
    slack: float

    def __str__(self):
        where = "tail" if self.k is None else f"k={self.k}"
        return f"{self.curve} {where}: value {self.value:.6g} < bound {self.bound:.6g} - slack {self.slack:.3g}"


@dataclass
class MonteCarloResult:
    config: ExperimentConfig
    optimum: Optimum
    curves: MsdCurves
    ledger: RateLedger
    rates: object
    report: bnd.BoundReport | None
    msd_bounds: dict | None
    violations: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    dde_tail: float = float("nan")
    offset_bits: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations and not self.errors


def _run_block(cfg, opt, indices):
    """Simulate one block; trials that raise are isolated and counted."""
    try:
        return simulate_batch(cfg, opt, indices), {}
    except (IntervalViolation, NumericError):
        pass
    good, errors, results = [], {}, []
    for idx in indices:
        try:
            results.append(simulate_batch(cfg, opt, [idx]))
            good.append(idx)
        except (IntervalViolation, NumericError) as exc:
            name = type(exc).__name__
            errors[name] = errors.get(name, 0) + 1
    if not results:
        return None, errors
    merged = BatchResult(
        np.asarray(good),
        np.concatenate([r.sq_pd for r in results], axis=1),
        np.concatenate([r.sq_x for r in results], axis=1),
        np.concatenate([r.sq_lambda for r in results], axis=1),
        results[0].bits_x,
        results[0].bits_lambda,
        max(r.max_offset for r in results),
    )
    return merged, errors


def lattice_count(vp: ValidatedProblem, mu: float, rho: float = 1.0, budget: int = DEFAULT_BUDGET):
    t = build_t_matrix(vp, mu)
    box = build_box(t, rho)
    if vp.M + vp.N <= 4:
        res = count_exact(t, box, budget)
    else:
        res = None
    if res is None or res.exact is None:
        return t, count_upper(t, box), False
    return t, res.exact, True


def monte_carlo(cfg: ExperimentConfig, workers: int = 1, opt: Optimum | None = None) -> MonteCarloResult:
    """Average ``cfg.trials`` trajectories and check them against every bound."""
    vp = cfg.problem
    opt = solve_optimum(vp) if opt is None else opt
    blocks = [np.arange(s, min(s + BLOCK, cfg.trials)) for s in range(0, cfg.trials, BLOCK)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outputs = list(pool.map(lambda b: _run_block(cfg, opt, b), blocks))
    else:
        outputs = [_run_block(cfg, opt, b) for b in blocks]

    errors: dict[str, int] = {}
    mom = {f: _Moments(0, None, None) for f in ("pd", "primal", "dual")}
    bits = None
    max_off = 0.0
    for res, errs in outputs:
        for name, c in errs.items():
            errors[name] = errors.get(name, 0) + c
        if res is None:
            continue
        mom["pd"] = mom["pd"].merge(_Moments.of(res.sq_pd))
        mom["primal"] = mom["primal"].merge(_Moments.of(res.sq_x))
        mom["dual"] = mom["dual"].merge(_Moments.of(res.sq_lambda))
        bits = bits or (res.bits_x, res.bits_lambda)
        max_off = max(max_off, res.max_offset)
    if bits is None:
        raise QpdError(f"every trial failed: {errors}")

    curves = MsdCurves(
        mom["pd"].mean, mom["primal"].mean, mom["dual"].mean,
        mom["pd"].stderr(), mom["primal"].stderr(), mom["dual"].stderr(),
        mom["pd"].n,
    )
    extra = offset_bits(max_off) if cfg.count_offset_bits else 0
    ledger = build_ledger(vp, bits[0], bits[1], extra)
    rates = rate_summary(ledger, cfg.steps)
    result = MonteCarloResult(cfg, opt, curves, ledger, rates, None, None, errors=errors, offset_bits=extra)
    result.dde_tail = empirical_dde(curves, cfg.tail_fraction)

    if not rates.finite:
        return result

    K = cfg.steps
    result.msd_bounds = bnd.msd_bound_curves(K, vp, cfg.schedule, cfg.init, ledger)
    for flavor in ("pd", "primal", "dual"):
        msd = getattr(curves, f"msd_{flavor}")
        with np.errstate(divide="ignore"):
            log_msd = np.log(msd)
        se = curves.log_stderr(flavor)
        bound = result.msd_bounds[flavor]
        for k in np.nonzero(log_msd < bound - SIGMA_SLACK * se)[0]:
            result.violations.append(
                Violation(f"msd_{flavor}", int(k), float(log_msd[k]), float(bound[k]), float(SIGMA_SLACK * se[k]))
            )

    t = beta = exact = None
    if vp.is_quadratic:
        t, beta, exact = lattice_count(vp, cfg.schedule.mu_star)
    result.report = bnd.bound_report(vp, opt, cfg.schedule.mu_star, rates, t, beta, exact)
    for name in ("dde_pd", "dde_zoomin"):
        b = getattr(result.report, name)
        if b is not None and isinstance(cfg.scheme, QaScheme) and not result.dde_tail >= b:
            result.violations.append(Violation(f"dde_tail_vs_{name}", None, result.dde_tail, b, 0.0))
    return result


# ---------------------------------------------------------------- output


CURVE_COLUMNS = (
    "k", "msd_pd", "msd_primal", "msd_dual", "stderr_pd", "dde_empirical",
    "bound_cor1_pd", "bound_cor2_primal", "bound_cor2_dual",
)


def _g(v) -> str:
    return format(float(v), ".17g")


def curves_csv(result: MonteCarloResult) -> str:
    c = result.curves
    dde = c.dde_empirical
    mb = result.msd_bounds
    lines = [",".join(CURVE_COLUMNS)]
    for k in range(c.steps + 1):
        row = [str(k), _g(c.msd_pd[k]), _g(c.msd_primal[k]), _g(c.msd_dual[k]), _g(c.stderr_pd[k]), _g(dde[k])]
        if mb is None:
            row += ["-inf", "-inf", "-inf"]
        else:
            row += [_g(mb["pd"][k]), _g(mb["primal"][k]), _g(mb["dual"][k])]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def report_text(result: MonteCarloResult) -> str:
    cfg = result.config
    r = result.rates
    out = ["[experiment]"]
    out.append(f"scheme = {cfg.scheme.name}")
    out.append(f"trials = {result.curves.n_trials}")
    out.append(f"steps = {cfg.steps}")
    out.append(f"seed = {cfg.seed}")
    out.append(f"mu_star = {_g(cfg.schedule.mu_star)}")
    out.append(f"wide_stderr = {'true' if result.curves.wide_stderr else 'false'}")
    out.append("")
    out.append("[rates]")
    for name in ("r_x", "r_lambda", "r_q"):
        out.append(f"{name}_nats = {_g(getattr(r, name))}")
        out.append(f"{name}_bits = {_g(getattr(r, name + '_bits'))}")
    out.append(f"offset_bits_per_symbol = {result.offset_bits}")
    out.append("")
    out.append("[bounds]")
    if result.report is not None:
        out.extend(result.report.to_text().splitlines())
    else:
        out.append("unavailable = rate is not finite")
    out.append(f"dde_empirical_tail = {_g(result.dde_tail)}")
    out.append("")
    out.append("[violations]")
    out.append(f"count = {len(result.violations)}")
    out.extend(str(v) for v in result.violations)
    out.append("")
    out.append("[errors]")
    out.append(f"count = {sum(result.errors.values())}")
    out.extend(f"{k} = {v}" for k, v in sorted(result.errors.items()))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- scenarios


def random_quadratic_problem(
    rng: np.random.Generator,
    M: int,
    N: int,
    a_range=(10.0, 30.0),
    row_norm: float = 16.0,
    zero_optimum: bool = False,
) -> ValidatedProblem:
    a = rng.uniform(*a_range, M)
    A = rng.uniform(-1.0, 1.0, (N, M))
    A *= row_norm / np.linalg.norm(A, axis=1, keepdims=True)
    c = np.zeros(M) if zero_optimum else rng.uniform(-1.0, 1.0, M)
    b = np.zeros(N) if zero_optimum else rng.uniform(-1.0, 1.0, N)
    return validate(NumProblem.quadratic(a, c, A, b))


def contractive_instance(
    seed: int,
    M: int,
    N: int,
    mu: float,
    max_rho: float,
    min_rho: float = 0.0,
    max_tries: int = 1000,
    **kwargs,
) -> tuple[ValidatedProblem, float]:
    """Resample random quadratic instances until min_rho <= rho(T) <= max_rho."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        vp = random_quadratic_problem(rng, M, N, **kwargs)
        if mu > vp.step_cap:
            continue
        try:
            c = contraction_constant(build_t_matrix(vp, mu))
        except NotContractive:
            continue
        if min_rho <= c.value <= max_rho:
            return vp, c.value
    raise ParamError(f"no instance with contraction <= {max_rho} in {max_tries} draws")


def fig3_config(seed: int = 2016, trials: int = 10_000, steps: int = 500, **overrides) -> ExperimentConfig:
    """Ten agents, five constraints, mu = 0.019, L = 5, alpha = 0.9495, 3-bit zoom-in."""
    mu = overrides.pop("mu", 0.019)
    alpha = overrides.pop("alpha", 0.9495)
    L = overrides.pop("L", 5)
    vp, _ = contractive_instance(seed, 10, 5, mu, alpha)
    scheme = overrides.pop("scheme", None) or QaScheme(alpha, L)
    return ExperimentConfig(
        problem=vp,
        scheme=scheme,
        schedule=StepSchedule.constant(mu),
        init=bnd.InitialDistribution.uniform_box(L, alpha),
        steps=steps,
        trials=trials,
        seed=seed,
        **overrides,
    )


SCENARIOS: dict[str, Callable[..., ExperimentConfig]] = {"paper-fig3": fig3_config}
