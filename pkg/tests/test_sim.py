import math

import numpy as np
import pytest

from qpdnum.bounds import InitialDistribution
from qpdnum.errors import ParamError
from qpdnum.pd import StepSchedule, build_t_matrix, contraction_constant
from qpdnum.quantize import LN2, PassthroughScheme, QaScheme, StaticUniformScheme
from qpdnum.sim import (
    BLOCK,
    ExperimentConfig,
    MsdCurves,
    _Moments,
    contractive_instance,
    curves_csv,
    empirical_dde,
    fig3_config,
    monte_carlo,
    offset_bits,
    report_text,
    run_trial,
    sample_initial,
    trial_rng,
)


def qa_config(vp, trials=50, steps=200, seed=7, **kw):
    mu = 0.1
    alpha = contraction_constant(build_t_matrix(vp, mu)).value
    return ExperimentConfig(vp, QaScheme(alpha, 5), StepSchedule.constant(mu),
                            InitialDistribution.uniform_box(5, alpha), steps, trials, seed, **kw)


def test_trial_rng_is_keyed():
    a = trial_rng(1, 5).uniform(size=3)
    np.testing.assert_array_equal(a, trial_rng(1, 5).uniform(size=3))
    assert not np.array_equal(a, trial_rng(1, 6).uniform(size=3))
    assert not np.array_equal(a, trial_rng(2, 5).uniform(size=3))


def test_initial_samples_in_box(two_agent):
    cfg = qa_config(two_agent)
    x, lam = sample_initial(cfg, np.arange(200))
    w = cfg.init.half_width
    assert x.shape == (200, 2) and lam.shape == (200, 1)
    assert np.all(np.abs(x) < w) and np.all(np.abs(lam) < w)


def test_run_trial_matches_monte_carlo_row(two_agent):
    cfg = qa_config(two_agent, trials=5)
    res = monte_carlo(cfg)
    rows = np.array([run_trial(cfg, i).sq_pd for i in range(5)])
    np.testing.assert_allclose(res.curves.msd_pd, rows.mean(axis=0), rtol=1e-12, atol=0)


def test_monte_carlo_deterministic_across_workers(two_agent):
    cfg = qa_config(two_agent, trials=BLOCK + 300, steps=60)
    a = monte_carlo(cfg, workers=1)
    b = monte_carlo(cfg, workers=3)
    assert curves_csv(a) == curves_csv(b)
    assert report_text(a) == report_text(b)


def test_qa_two_agent_no_violations(two_agent):
    res = monte_carlo(qa_config(two_agent, trials=200, steps=300))
    assert res.ok, report_text(res)
    assert res.curves.msd_pd[-1] < 1e-8
    # 3 variables, first step 2L = 10 cells (4 bits), then 2*ceil(2/alpha) = 6 cells (3 bits)
    assert res.ledger.total_bits() == 3 * 4 + 299 * 9


def test_passthrough_converges_to_zero_optimum(two_agent_centered):
    cfg = ExperimentConfig(two_agent_centered, PassthroughScheme(), StepSchedule.constant(0.1),
                           InitialDistribution.uniform_box(5, 0.5), 400, 20, 3)
    res = monte_carlo(cfg)
    assert res.report is None and res.msd_bounds is None
    assert math.isinf(res.rates.r_q)
    # errors shrink like rho^k with rho^2 = 0.92
    slope = np.polyfit(np.arange(200, 401), np.log(res.curves.msd_pd[200:]), 1)[0]
    assert slope == pytest.approx(math.log(0.92), abs=1e-3)
    assert "-inf" in curves_csv(res).splitlines()[1]


def test_msd_at_k0_matches_uniform_second_moment(two_agent_centered):
    # E||y0||^2 for y0 uniform on (-w, w)^3 is 3 w^2 / 3 = w^2
    cfg = ExperimentConfig(two_agent_centered, PassthroughScheme(), StepSchedule.constant(0.1),
                           InitialDistribution.uniform_box(2, 0.5), 1, 20000, 11)
    res = monte_carlo(cfg)
    assert res.curves.msd_pd[0] == pytest.approx(1.0, abs=4 * res.curves.stderr_pd[0])


def test_single_trial_has_wide_stderr(two_agent):
    res = monte_carlo(qa_config(two_agent, trials=1, steps=20))
    assert res.curves.wide_stderr
    assert np.all(np.isinf(res.curves.stderr_pd))
    assert "wide_stderr = true" in report_text(res)


def test_static_uniform_stalls_and_is_isolated(two_agent):
    # a 1-bit static codec cannot reach the optimum; bounds still hold
    cfg = ExperimentConfig(two_agent, StaticUniformScheme(2.0, 1), StepSchedule.constant(0.1),
                           InitialDistribution.uniform_box(5, 0.5), 200, 50, 1)
    res = monte_carlo(cfg)
    assert not res.errors and not [v for v in res.violations if v.k is not None]
    assert res.curves.msd_pd[-1] > 1e-3


def test_small_alpha_moves_cost_into_offsets(two_agent):
    # the offset always re-centres the window on the true value, so a too
    # small alpha never breaks the interval; it needs larger offsets instead
    def run(alpha):
        cfg = ExperimentConfig(two_agent, QaScheme(alpha, 5), StepSchedule.constant(0.1),
                               InitialDistribution.uniform_box(5, alpha), 50, 20, 0, count_offset_bits=True)
        return monte_carlo(cfg)

    small, matched = run(0.3), run(0.96)
    assert not small.errors and not matched.errors
    assert small.offset_bits > matched.offset_bits


def test_moments_merge_matches_direct():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(4, 3000))
    m = _Moments(0, None, None)
    for start in range(0, 3000, 1024):
        m = m.merge(_Moments.of(s[:, start : start + 1024]))
    np.testing.assert_allclose(m.mean, s.mean(axis=1), rtol=1e-13)
    np.testing.assert_allclose(m.stderr(), s.std(axis=1, ddof=1) / math.sqrt(3000), rtol=1e-12)


def test_empirical_dde_on_geometric_sequence():
    k = np.arange(101)
    msd = 4.0 * 0.8**k
    c = MsdCurves(msd, msd, msd, msd * 0, msd * 0, msd * 0, 10)
    dde = c.dde_empirical
    assert math.isnan(dde[0])
    np.testing.assert_allclose(dde[1:], (math.log(4.0) + k[1:] * math.log(0.8)) / k[1:], rtol=1e-12)
    expected = np.mean(dde[50:])
    assert empirical_dde(c, 0.5) == pytest.approx(expected, rel=1e-12)
    assert empirical_dde(c, 0.5) > math.log(0.8)


def test_offset_bits():
    assert [offset_bits(v) for v in (0, 0.5, 1, 2, 3, 4)] == [0, 0, 2, 3, 3, 4]


def test_count_offset_bits_raises_rate(two_agent):
    base = monte_carlo(qa_config(two_agent, trials=20, steps=50))
    extra = monte_carlo(qa_config(two_agent, trials=20, steps=50, count_offset_bits=True))
    assert extra.offset_bits >= 1
    assert extra.rates.r_q == pytest.approx(base.rates.r_q + 3 * extra.offset_bits * LN2 * 49 / 50)


def test_config_validation(two_agent):
    with pytest.raises(ParamError):
        qa_config(two_agent, trials=0)
    with pytest.raises(ParamError):
        ExperimentConfig(two_agent, PassthroughScheme(), StepSchedule.constant(0.1),
                         InitialDistribution.custom(0.0, 0.0), 10, 10)


def test_contractive_instance_respects_limits():
    vp, rho = contractive_instance(3, 6, 3, 0.2, 0.98, min_rho=0.8, a_range=(1, 3), row_norm=1.5)
    assert 0.8 <= rho <= 0.98
    assert rho == contraction_constant(build_t_matrix(vp, 0.2)).value


def test_fig3_scenario_shape():
    cfg = fig3_config(trials=10, steps=5)
    assert (cfg.problem.M, cfg.problem.N) == (10, 5)
    assert cfg.schedule.mu_star == 0.019 and cfg.scheme.alpha == 0.9495 and cfg.init.L == 5
    assert contraction_constant(build_t_matrix(cfg.problem, 0.019)).value <= 0.9495


def test_failing_trial_is_isolated(two_agent, monkeypatch):
    import qpdnum.sim as sim

    real = sim.sample_initial

    def bad_trial_three(cfg, indices):
        x, lam = real(cfg, indices)
        x[np.asarray(indices) == 3] = 100.0
        return x, lam

    monkeypatch.setattr(sim, "sample_initial", bad_trial_three)
    res = monte_carlo(qa_config(two_agent, trials=10, steps=20))
    assert res.errors == {"IntervalViolation": 1}
    assert res.curves.n_trials == 9
    assert not res.ok
    assert "IntervalViolation = 1" in report_text(res)
