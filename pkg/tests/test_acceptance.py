"""One test per acceptance criterion; each prints a PASS/FAIL line."""
import contextlib
import math
import time

import numpy as np
import pytest

from qpdnum.bounds import InitialDistribution, dde_bound_combined, dde_bound_pd, dde_bound_zoomin
from qpdnum.lattice import build_box, count_exact
from qpdnum.pd import PdState, StepSchedule, build_t_matrix, error_vector, quantized_step, unquantized_step
from qpdnum.problem import GeneralConcave, NumProblem, kkt_residuals, solve_optimum, validate
from qpdnum.quantize import LN2, QaScheme, StaticUniformScheme, qa_init
from qpdnum.sim import ExperimentConfig, contractive_instance, fig3_config, lattice_count, monte_carlo, simulate_batch

from conftest import ACCEPTANCE_LINES, random_quadratic
from test_lattice import brute_force, random_contraction


@contextlib.contextmanager
def criterion(n, title):
    info = {}
    try:
        yield info
    except BaseException as exc:
        line = f"criterion {n}: FAIL {title} ({type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        raise
    detail = ", ".join(f"{k}={v}" for k, v in info.items())
    line = f"criterion {n}: PASS {title}" + (f" [{detail}]" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def test_c1_kkt_correctness():
    with criterion(1, "KKT residuals and Newton agreement") as info:
        t0 = time.perf_counter()
        rng = np.random.default_rng(101)
        worst = worst_newton = 0.0
        for _ in range(100):
            vp = random_quadratic(rng)
            opt = solve_optimum(vp)
            stat, feas = kkt_residuals(vp, opt.x_star, opt.lambda_star)
            assert stat <= 1e-8 and feas <= 1e-8
            wrapped = validate(NumProblem(tuple(GeneralConcave.from_quadratic(u) for u in vp.utilities),
                                          vp.a_matrix, vp.b))
            nopt = solve_optimum(wrapped, method="newton")
            gap = max(np.max(np.abs(nopt.x_star - opt.x_star)), np.max(np.abs(nopt.lambda_star - opt.lambda_star)))
            assert gap <= 1e-8
            worst, worst_newton = max(worst, stat, feas), max(worst_newton, gap)
        elapsed = time.perf_counter() - t0
        assert elapsed < 5.0
        info.update(max_residual=f"{worst:.1e}", max_newton_gap=f"{worst_newton:.1e}", seconds=f"{elapsed:.2f}")


def test_c2_dynamics_equivalence():
    with criterion(2, "PD step equals T-matrix map; optimum is a fixed point") as info:
        rng = np.random.default_rng(202)
        worst = worst_fixed = 0.0
        for _ in range(100):
            vp = random_quadratic(rng)
            mu = rng.uniform(0.05, 1.0) * vp.step_cap
            sched = StepSchedule.constant(mu)
            t = build_t_matrix(vp, mu)
            y = rng.normal(scale=5.0, size=(100, vp.M + vp.N))
            s = unquantized_step(PdState(y[:, : vp.M], y[:, vp.M :]), vp, sched)
            worst = max(worst, float(np.max(np.abs(s.y - t.apply(y)))))
            opt = solve_optimum(vp)
            f = unquantized_step(PdState(opt.x_star, opt.lambda_star), vp, sched)
            worst_fixed = max(worst_fixed, float(np.max(np.abs(f.y - opt.y_star))))
        assert worst <= 1e-12 and worst_fixed <= 1e-12
        info.update(max_map_gap=f"{worst:.1e}", max_fixed_gap=f"{worst_fixed:.1e}")


def _contractive_suite():
    out = []
    rng = np.random.default_rng(303)
    for s in range(20):
        M = int(rng.integers(2, 7))
        N = int(rng.integers(1, M))
        vp, rho = contractive_instance(1000 + s, M, N, 0.2, 0.98, min_rho=0.8, a_range=(1, 3), row_norm=1.5)
        out.append((vp, rho))
    return out


def test_c3_qa_converges_exponentially():
    with criterion(3, "Q_a converges on 20 contractive instances x 100 seeds, K=2000") as info:
        t0 = time.perf_counter()
        K = 2000
        worst_final, worst_slope = 0.0, -np.inf
        for i, (vp, rho) in enumerate(_contractive_suite()):
            cfg = ExperimentConfig(vp, QaScheme(rho, 5), StepSchedule.constant(0.2),
                                   InitialDistribution.uniform_box(5, rho), K, 100, seed=i)
            # simulate_batch raises IntervalViolation on the first bad step
            b = simulate_batch(cfg, solve_optimum(vp), np.arange(100))
            final = np.sqrt(b.sq_pd[-1])
            assert np.all(final <= 1e-6)
            msd = b.sq_pd.mean(axis=1)
            ks = np.nonzero(msd > 1e-24)[0]
            slope = np.polyfit(ks, np.log(msd[ks]), 1)[0]
            assert slope < 0
            worst_final, worst_slope = max(worst_final, float(final.max())), max(worst_slope, slope)
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0
        info.update(max_final_error=f"{worst_final:.1e}", max_slope=f"{worst_slope:.4f}",
                    interval_violations=0, seconds=f"{elapsed:.1f}")


def test_c4_codec_error_bound():
    with criterion(4, "|v_k - decode_k| <= alpha^(k+1) at every step") as info:
        checked = 0
        for vp, rho in _contractive_suite()[:5]:
            mu = 0.2
            sched = StepSchedule.constant(mu)
            opt = solve_optimum(vp)
            rng = np.random.default_rng(checked)
            w = 5 * rho
            state = PdState(rng.uniform(-w, w, (50, vp.M)), rng.uniform(-w, w, (50, vp.N)))
            sx, sl = qa_init(rho, 5, (50, vp.M)), qa_init(rho, 5, (50, vp.N))
            for k in range(1500):
                qx, _ = sx.send(state.x)
                ql, _ = sl.send(state.lam)
                for v, q in ((state.x, qx), (state.lam, ql)):
                    slack = 4 * np.spacing(np.maximum(np.abs(v), np.abs(q)))
                    assert np.all(np.abs(v - q) <= rho ** (k + 1) + slack)
                    checked += v.size
                state = quantized_step(state, qx, ql, vp, sched)
            assert np.all(np.linalg.norm(error_vector(state, opt).eps, axis=1) < 1e-6)
        info.update(samples_checked=checked)


def test_c5_lattice_oracle():
    with criterion(5, "count_exact matches brute force; worked example 43/56") as info:
        t0 = time.perf_counter()
        T2 = np.array([[0.9, -0.1], [0.1, 1.0]])
        box = build_box(T2)
        res = count_exact(T2, box)
        assert brute_force(T2, box.side_lengths) == 43
        assert (res.exact, res.upper) == (43, 56)
        rng = np.random.default_rng(505)
        for d, n in ((2, 500), (3, 100)):
            for _ in range(n):
                T = random_contraction(rng, d)
                box = build_box(T)
                r = count_exact(T, box)
                assert r.exact == brute_force(T, box.side_lengths)
                assert 1 <= r.exact <= r.upper
        elapsed = time.perf_counter() - t0
        assert elapsed < 30.0
        info.update(matrices=600, seconds=f"{elapsed:.2f}")


@pytest.fixture(scope="module")
def fig3_run():
    t0 = time.perf_counter()
    res = monte_carlo(fig3_config())
    return res, time.perf_counter() - t0


def test_c6_finite_time_bounds_hold(fig3_run):
    with criterion(6, "fig3 scenario: ln msd >= finite-time bounds - 3 stderr at every k") as info:
        res, elapsed = fig3_run
        assert res.curves.n_trials == 10_000 and res.config.steps == 500
        assert not res.errors
        per_k = [v for v in res.violations if v.k is not None]
        assert not per_k, "\n".join(map(str, per_k[:5]))
        assert elapsed < 600
        margin = min(float(np.min(np.log(getattr(res.curves, f"msd_{f}")) - res.msd_bounds[f]))
                     for f in ("pd", "primal", "dual"))
        info.update(min_margin_nats=f"{margin:.2f}", seconds=f"{elapsed:.1f}")


def test_c7_dde_above_bounds(fig3_run):
    with criterion(7, "fig3 scenario: tail DDE >= rate bound and zoom-in bound") as info:
        res, _ = fig3_run
        t = build_t_matrix(res.config.problem, res.config.schedule.mu_star)
        upper = count_exact(t, build_box(t), budget=0).upper
        zoom = dde_bound_zoomin(t, upper)
        pd = dde_bound_pd(res.config.problem, res.optimum, res.config.schedule.mu_star, res.rates.r_q)
        assert res.dde_tail >= pd and res.dde_tail >= zoom
        info.update(dde_tail=f"{res.dde_tail:.3f}", dde_pd=f"{pd:.3f}", dde_zoomin=f"{zoom:.3f}")


def test_c8_rate_accounting(fig3_run):
    with criterion(8, "fig3 scenario: R_Q within 0.1 bits of 45 bits/step at k=500") as info:
        res, _ = fig3_run
        assert abs(res.rates.r_q_bits - 45.0) <= 0.1
        assert res.rates.r_q_bits == pytest.approx((15 * 4 + 499 * 45) / 500, abs=1e-12)
        info.update(r_q_bits=f"{res.rates.r_q_bits:.4f}")


def test_c9_combined_bound_branch(two_agent):
    with criterion(9, "subdivision factor raises R_Q by (N+M) ln K and flips the min branch") as info:
        mu = 0.1
        t, beta, exact = lattice_count(two_agent, mu)
        assert exact and beta == 323
        d = two_agent.M + two_agent.N
        curv = float(np.sum(np.log(1 - mu * two_agent.curvatures)))

        def run(subdiv):
            bits = 1 + int(math.log2(subdiv))
            cfg = ExperimentConfig(two_agent, StaticUniformScheme(2.5, bits), StepSchedule.constant(mu),
                                   InitialDistribution.uniform_box(5, 0.5), 100, 20, 0)
            return monte_carlo(cfg)

        base, fine = run(1), run(8)
        assert fine.rates.r_q - base.rates.r_q == pytest.approx(d * math.log(8), abs=1e-12)
        assert base.report.dde_zoomin == fine.report.dde_zoomin == dde_bound_zoomin(t, beta)
        assert base.rates.r_q < math.log(beta) < fine.rates.r_q
        b_lo = dde_bound_combined(two_agent, t, beta, base.rates.r_q)
        b_hi = dde_bound_combined(two_agent, t, beta, fine.rates.r_q)
        assert b_lo == pytest.approx(2 / d * (curv - base.rates.r_q), abs=1e-14)
        assert b_hi == pytest.approx(2 / d * (curv - math.log(beta)), abs=1e-14)
        assert base.report.dde_combined == b_lo and fine.report.dde_combined == b_hi
        info.update(r_q_base=f"{base.rates.r_q:.3f}", ln_beta=f"{math.log(beta):.3f}", r_q_fine=f"{fine.rates.r_q:.3f}")
