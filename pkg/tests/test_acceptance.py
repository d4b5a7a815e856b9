"""Acceptance suite: one test per criterion, each printing a PASS line.

The desk-scale study (criteria 6 and 7) runs once as a module fixture and
dominates the runtime; run with ``pytest tests/test_acceptance.py -s`` to
see the per-criterion lines as they complete.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

import apl
from apl.estimators import MapConfig, McmcConfig

from helpers import (
    TIGER_TRUE,
    brute_force_obs_loglik,
    random_pomdp,
    random_trace,
    replicate_rewards,
)

# two bounds for prior-mean error magnitudes: the benchmark's reported
# reference values and the values computed from the priors themselves
REPORTED_PRIOR_ERRORS = (-0.100, -0.183, -0.183)
COMPUTED_PRIOR_ERRORS = (-0.100, -0.225, -0.225)

_fixture_wall = {}


def _report(number, elapsed, detail=""):
    suffix = f" - {detail}" if detail else ""
    print(f"\ncriterion {number}: PASS ({elapsed:.1f}s){suffix}")


@pytest.fixture(scope="module")
def desk_bundle():
    config = apl.ExperimentConfig(true_theta=tuple(TIGER_TRUE), master_seed=1)
    started = time.perf_counter()
    bundle = apl.run_experiment(config)
    _fixture_wall["desk"] = time.perf_counter() - started
    return bundle


def test_criterion_1_likelihood_oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(1001)
    checked = 0
    while checked < 50:
        model = random_pomdp(rng,
                             n_states=int(rng.integers(2, 4)),
                             n_actions=int(rng.integers(1, 3)),
                             n_obs=int(rng.integers(1, 3)))
        trace = random_trace(rng, model, int(rng.integers(1, 6)))
        fast = apl.obs_loglik(model, trace)
        slow = brute_force_obs_loglik(model, trace)
        assert fast == pytest.approx(slow, rel=1e-10)
        checked += 1
    elapsed = time.perf_counter() - started
    assert elapsed < 10.0
    _report(1, elapsed, "50 random models match enumeration at 1e-10")


def test_criterion_2_solver_sanity(tiger_model, tiger_vf):
    started = time.perf_counter()
    transition = np.array([[[0.7, 0.3]], [[0.2, 0.8]]])
    chain = apl.Pomdp(transition, np.ones((1, 2, 1)), [0.5, 0.5],
                      np.ones((2, 1)), 0.9)
    cfg = apl.SolverConfig()
    vf_chain = apl.solve(chain, cfg)
    assert apl.value(vf_chain, chain.initial_belief) == pytest.approx(
        10.0, abs=cfg.precision)

    n_runs, steps = 20, 500
    greedy = replicate_rewards(tiger_model,
                               lambda: apl.ModelPolicy(tiger_model, tiger_vf),
                               n_runs, steps, seed0=2000)
    listen = replicate_rewards(tiger_model,
                               lambda: (lambda b: np.array([1.0, 0.0, 0.0])),
                               n_runs, steps, seed0=3000)
    uniform = replicate_rewards(tiger_model,
                                lambda: (lambda b: np.full(3, 1.0 / 3.0)),
                                n_runs, steps, seed0=4000)
    assert np.all(listen == -1.0)
    se_greedy = greedy.std(ddof=1) / math.sqrt(n_runs)
    assert greedy.mean() - (-1.0) > 3.0 * se_greedy
    se_pair = math.sqrt(greedy.var(ddof=1) / n_runs + uniform.var(ddof=1) / n_runs)
    assert greedy.mean() - uniform.mean() > 3.0 * se_pair
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _report(2, elapsed,
            f"V(b0)=10 exact; greedy {greedy.mean():+.3f}/step vs listen -1.000 "
            f"and uniform {uniform.mean():+.3f}")


def test_criterion_3_ffbs_matches_smoothing():
    started = time.perf_counter()
    rng = np.random.default_rng(1003)
    model = random_pomdp(rng, n_states=3, n_actions=2, n_obs=2)
    trace = random_trace(rng, model, 6)
    marginals, _ = apl.smoothed_marginals(model, trace)
    draws = np.array([apl.ffbs(model, trace, 50_000 + i) for i in range(20_000)])
    worst = 0.0
    for i in range(len(trace)):
        freq = np.bincount(draws[:, i], minlength=3) / len(draws)
        worst = max(worst, float(np.abs(freq - marginals[i]).max()))
    assert worst <= 0.02
    elapsed = time.perf_counter() - started
    assert elapsed < 30.0
    _report(3, elapsed, f"20k draws within {worst:.4f} of exact smoothing")


def test_criterion_4_beta_zero_sampler_equivalence(tiger_template, tiger_model,
                                                   tiger_vf, expert_cfg):
    started = time.perf_counter()
    demo = apl.generate_demo(tiger_model, tiger_vf, expert_cfg, 100, 4242)
    flat = apl.PolicyConfig(0.0)
    mcmc_cfg = McmcConfig(total_sweeps=500, burn_in=100, thin=10, seed=11)
    solver_cfg = apl.SolverConfig(belief_set_limit=32, max_iterations=200)
    sampled = apl.mcmc_posterior(tiger_template, demo, flat, mcmc_cfg, solver_cfg)
    baseline = apl.iohmm_gibbs(tiger_template, demo,
                               McmcConfig(total_sweeps=500, burn_in=100,
                                          thin=10, seed=12))
    assert sampled.acceptance_rate == 1.0
    result = stats.ks_2samp(sampled.thetas[:, 1], baseline.thetas[:, 1])
    assert result.pvalue >= 0.05
    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    _report(4, elapsed, f"two-sample KS p={result.pvalue:.3f} on p_l")


def test_criterion_5_extended_pomdp_equivalence(tiger_template, tiger_model):
    started = time.perf_counter()
    cfg = apl.SolverConfig()
    single_value = apl.value(apl.solve(tiger_model, cfg),
                             tiger_model.initial_belief)
    policy = apl.plan_posterior(np.array([TIGER_TRUE]), tiger_template, cfg)
    extended_value = apl.value(policy.vf, policy.extended.model.initial_belief)
    assert extended_value == pytest.approx(single_value, abs=2 * cfg.precision)

    rng = np.random.default_rng(1005)
    for _ in range(3):
        thetas = np.array([apl.sample_prior(tiger_template, rng) for _ in range(2)])
        extended = apl.extend(thetas, tiger_template)
        trace = random_trace(rng, tiger_model, 30)
        belief = extended.model.initial_belief
        for a, z in trace.steps():
            belief, _ = apl.belief_update(extended.model, belief, a, z)
        marginal = np.bincount(extended.sample_index, weights=belief, minlength=2)
        logliks = np.array([
            apl.obs_loglik(apl.instantiate(tiger_template, theta), trace)
            for theta in thetas
        ])
        weights = np.exp(logliks - logliks.max())
        np.testing.assert_allclose(marginal, weights / weights.sum(),
                                   rtol=1e-9, atol=1e-12)
    elapsed = time.perf_counter() - started
    assert elapsed < 60.0
    _report(5, elapsed, "M=1 value matches; index marginal = forward Bayes")


def test_criterion_6_estimate_quality_trend_at_desk_scale(desk_bundle):
    started = time.perf_counter()
    bundle = desk_bundle
    agg = bundle.aggregates
    p_l, p_r = 1, 2

    # (a) proposed-sampler RMSE beats both response-only baselines on p_l, p_r
    for k in (p_l, p_r):
        assert agg["mcmc"]["rmse"][k] < agg["em"]["rmse"][k]
        assert agg["mcmc"]["rmse"][k] < agg["gibbs"]["rmse"][k]

    # (b) proposed mean errors smaller in magnitude than the prior-mean
    # errors, under both reference value sets
    for method in ("mcmc", "map"):
        for k, (reported, computed) in enumerate(zip(REPORTED_PRIOR_ERRORS,
                                                     COMPUTED_PRIOR_ERRORS)):
            bound = min(abs(reported), abs(computed))
            assert abs(agg[method]["mean_error"][k]) < bound, \
                f"{method} mean error for parameter {k} not inside {bound}"

    # (c) only the proposed methods move r_t from the prior mean toward -100
    em_estimates = [r.point_estimate[3] for r in bundle.runs
                    if r.estimator == "em" and r.error is None]
    assert all(value == -50.0 for value in em_estimates)
    gibbs_mean = np.mean([r.point_estimate[3] for r in bundle.runs
                          if r.estimator == "gibbs" and r.error is None])
    assert abs(gibbs_mean + 50.0) < 10.0
    for method in ("mcmc", "map"):
        errors = [abs(r.point_estimate[3] + 100.0) for r in bundle.runs
                  if r.estimator == method and r.error is None]
        assert len(errors) == bundle.n_demos
        assert sum(1 for e in errors if e < 50.0) >= 7
        mean_estimate = np.mean([r.point_estimate[3] for r in bundle.runs
                                 if r.estimator == method and r.error is None])
        assert mean_estimate < -50.0   # moved toward -100

    wall = _fixture_wall.get("desk", 0.0)
    assert wall < 7200.0
    elapsed = time.perf_counter() - started
    _report(6, wall + elapsed,
            "rmse(mcmc) < rmse(em), rmse(gibbs) on p_l/p_r; "
            f"mcmc mean errors {np.round(agg['mcmc']['mean_error'], 3).tolist()}")


def test_criterion_7_reward_trend_at_desk_scale(desk_bundle):
    started = time.perf_counter()
    bundle = desk_bundle
    rewards_mcmc = np.array(bundle.aggregates["mcmc"]["rewards"])
    rewards_em = np.array(bundle.aggregates["em"]["rewards"])
    assert np.median(rewards_mcmc) >= np.median(rewards_em)
    baseline = bundle.expert_baseline
    good = int((rewards_mcmc >= baseline - 1.0).sum())
    assert good >= 8
    elapsed = time.perf_counter() - started
    assert elapsed < 1800.0
    _report(7, elapsed,
            f"median mcmc {np.median(rewards_mcmc):+.3f} >= em "
            f"{np.median(rewards_em):+.3f}; {good}/10 within 1.0 of expert "
            f"{baseline:+.3f}")


def test_criterion_8_map_consistency(tiger_template, tiger_model, tiger_vf,
                                     expert_cfg):
    started = time.perf_counter()
    demo = apl.generate_demo(tiger_model, tiger_vf, expert_cfg, 2000, 7)
    estimate = apl.map_estimate(tiger_template, demo, expert_cfg, MapConfig(),
                                apl.SolverConfig(belief_set_limit=64,
                                                 max_iterations=300))
    assert abs(estimate[1] - 0.85) < 0.05
    assert abs(estimate[2] - 0.85) < 0.05
    elapsed = time.perf_counter() - started
    assert elapsed < 900.0
    _report(8, elapsed,
            f"p_l={estimate[1]:.3f}, p_r={estimate[2]:.3f} within 0.05 of 0.85")


def test_criterion_9_invariant_suites(tiger_template, tiger_model, tiger_vf,
                                      expert_cfg, tiger_demo):
    started = time.perf_counter()

    # belief normalization across random models
    rng = np.random.default_rng(1009)
    for _ in range(20):
        model = random_pomdp(rng, n_states=int(rng.integers(2, 4)))
        trace = random_trace(rng, model, 10)
        belief = model.initial_belief
        for a, z in trace.steps():
            belief, _ = apl.belief_update(model, belief, a, z)
            assert abs(belief.sum() - 1.0) <= 1e-9
            assert belief.min() >= 0.0

    # monotone EM ascent
    _, history = apl.iohmm_em(tiger_template, tiger_demo, return_history=True)
    assert np.all(np.diff(history) >= -1e-9)

    # Metropolis accept rule on the primitive
    assert apl.metropolis_accept(math.log(0.5), 0.0, 0.49)
    assert not apl.metropolis_accept(math.log(0.5), 0.0, 0.51)
    assert apl.metropolis_accept(-1.0, -math.inf, 0.999999)
    assert not apl.metropolis_accept(-math.inf, -1.0, 1e-9)

    # determinism under seeds
    cfg = apl.SolverConfig(seed=7)
    vf_a, vf_b = apl.solve(tiger_model, cfg), apl.solve(tiger_model, cfg)
    for sa, sb in zip(vf_a.alpha_sets, vf_b.alpha_sets):
        np.testing.assert_array_equal(sa, sb)
    gcfg = McmcConfig(total_sweeps=40, burn_in=10, thin=5, seed=8)
    ga = apl.iohmm_gibbs(tiger_template, tiger_demo, gcfg)
    gb = apl.iohmm_gibbs(tiger_template, tiger_demo, gcfg)
    np.testing.assert_array_equal(ga.thetas, gb.thetas)
    ta, ra = apl.simulate(tiger_model, apl.ModelPolicy(tiger_model, tiger_vf),
                          200, 9)
    tb, rb = apl.simulate(tiger_model, apl.ModelPolicy(tiger_model, tiger_vf),
                          200, 9)
    np.testing.assert_array_equal(ta.actions, tb.actions)
    assert ra == rb

    # template row-sum identities at sampled parameters
    assert apl.validate_template(tiger_template) == []
    for _ in range(200):
        theta = apl.sample_prior(tiger_template, rng)
        model = apl.instantiate(tiger_template, theta)
        assert np.abs(model.transition.sum(axis=2) - 1.0).max() <= 1e-9
        assert np.abs(model.observation.sum(axis=2) - 1.0).max() <= 1e-9

    elapsed = time.perf_counter() - started
    assert elapsed < 300.0
    _report(9, elapsed, "normalization, EM ascent, accept rule, determinism, "
                        "row sums all hold")
