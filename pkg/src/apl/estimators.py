"""Parameter estimators: posterior sampling, MAP search, IO-HMM baselines.

The sampler alternates an exact hidden-state draw with per-coordinate
conjugate proposals; a Metropolis step on the expert-action likelihood alone
corrects each proposal, so jointly the chain targets the full posterior.
The baselines drop that correction (Gibbs) or replace sampling with
expectation-maximization (EM); neither ever calls the planner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import NoFeasibleStart, UnsupportedParameterRole
from .likelihood import StateSequence, _forward_backward, action_loglik, ffbs, log_posterior
from .model_family import (
    PROB_CLAMP,
    BetaPrior,
    NormalPrior,
    ParametricTemplate,
    instantiate,
    log_prior,
    sample_prior,
)
from .pomdp_core import DemoTrace, PolicyConfig, ValueFunction
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class McmcConfig:
    total_sweeps: int = 1000
    burn_in: int = 100
    thin: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if not 0 <= self.burn_in < self.total_sweeps:
            raise ValueError("burn_in must satisfy 0 <= burn_in < total_sweeps")

    @property
    def n_samples(self) -> int:
        return (self.total_sweeps - self.burn_in) // self.thin


@dataclass(frozen=True)
class MapConfig:
    start: tuple[float, ...] | None = None   # None: prior means
    max_evaluations: int = 200
    step_tol: float = 1e-3
    probability_margin: float = 1e-4         # box [margin, 1 - margin] for Beta components
    normal_range_sigmas: float = 4.0         # box mean +- k*sd for Normal components

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        if not (0 < self.probability_margin < 0.5):
            raise ValueError("probability_margin must be in (0, 0.5)")


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 200
    tol: float = 1e-6


@dataclass(frozen=True)
class SampleSet:
    """Ordered retained posterior samples, one parameter vector per row."""

    thetas: np.ndarray
    acceptance_rate: float | None = None
    value_functions: tuple[ValueFunction, ...] | None = None

    def __post_init__(self):
        arr = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if arr.shape[0] < 1:
            raise ValueError("a sample set needs at least one sample")
        arr.setflags(write=False)
        object.__setattr__(self, "thetas", arr)

    def __len__(self) -> int:
        return self.thetas.shape[0]

    def mean(self) -> np.ndarray:
        return self.thetas.mean(axis=0)

    def sd(self) -> np.ndarray:
        if len(self) == 1:
            return np.zeros(self.thetas.shape[1])
        return self.thetas.std(axis=0, ddof=1)


def metropolis_accept(log_p_new: float, log_p_old: float, u: float) -> bool:
    """Accept-with-probability min(1, p'/p) on forced uniform draw ``u``.

    A -inf previous likelihood (the sampler's initial "infinitesimal"
    accumulator) always accepts.
    """
    if log_p_old == -math.inf:
        return True
    if log_p_new == -math.inf:
        return False
    delta = log_p_new - log_p_old
    if delta >= 0.0:
        return True
    return u < math.exp(delta)


def _check_role(template: ParametricTemplate, k: int) -> bool:
    """True when component k is a conjugate (Bernoulli-tied) probability
    parameter, False when it only feeds reward cells; raises otherwise."""
    if template.prob_param[k]:
        if template.reward_param[k]:
            raise UnsupportedParameterRole(
                f"{template.param_names[k]} appears in both probability and reward cells")
        if not template.tied_param[k]:
            raise UnsupportedParameterRole(
                f"{template.param_names[k]} appears in a probability cell that is not "
                f"theta or 1 - theta")
        if not isinstance(template.priors[k], BetaPrior):
            raise UnsupportedParameterRole(
                f"{template.param_names[k]} parameterizes probabilities but has no Beta prior")
        return True
    return False


def _tied_counts(template: ParametricTemplate, k: int, states: StateSequence,
                 trace: DemoTrace) -> tuple[int, int]:
    """Success/failure tallies for parameter k along a sampled state path.

    Transition cells are tallied from the second step on (the state before
    the first action is not part of the path); observation cells at every
    step; initial-distribution occurrences carry no observed state and add
    nothing.
    """
    successes = failures = 0
    acts = trace.actions
    obs = trace.observations
    if len(states) >= 2:
        tsign = template.trans_signs[k]
        signs = tsign[states[:-1], acts[1:], states[1:]]
        successes += int((signs > 0).sum())
        failures += int((signs < 0).sum())
    if len(states) >= 1:
        osign = template.obs_signs[k]
        signs = osign[acts, states, obs]
        successes += int((signs > 0).sum())
        failures += int((signs < 0).sum())
    return successes, failures


def conditional_draw(template: ParametricTemplate, theta, k: int,
                     states: StateSequence, trace: DemoTrace, seed) -> float:
    """Propose a replacement value for component k.

    Probability components tied as (theta_k, 1 - theta_k) pairs get a
    Beta(alpha + successes, beta + failures) draw with counts read off the
    state path; components with no probability-cell occurrence are drawn
    from their prior (the response likelihood carries no information about
    them).
    """
    rng = np.random.default_rng(seed)
    if not _check_role(template, k):
        return template.priors[k].sample(rng)
    prior = template.priors[k]
    successes, failures = _tied_counts(template, k, np.asarray(states), trace)
    return float(rng.beta(prior.alpha + successes, prior.beta + failures))


def mcmc_posterior(template: ParametricTemplate, trace: DemoTrace,
                   cfg: PolicyConfig, mcmc_cfg: McmcConfig,
                   solver_cfg: SolverConfig = SolverConfig()) -> SampleSet:
    """Metropolis-within-Gibbs sampler for the parameter posterior.

    Per sweep: draw the hidden state path for the current parameters, then
    propose each component in fresh random order from its conjugate
    conditional, re-plan, and accept on the expert-action likelihood ratio
    alone.  The accepted likelihood is carried over, so the previous point
    is never re-solved.  Collects every ``thin``-th sweep after burn-in.
    """
    if len(trace) == 0:
        raise ValueError("mcmc_posterior needs a non-empty demonstration")
    rng = np.random.default_rng(mcmc_cfg.seed)
    n_params = template.n_params
    for k in range(n_params):
        _check_role(template, k)
    theta = sample_prior(template, rng)
    log_p = -math.inf
    kept: list[np.ndarray] = []
    accepted = proposed = 0
    for sweep in range(1, mcmc_cfg.total_sweeps + 1):
        model = instantiate(template, theta)
        states = ffbs(model, trace, rng)
        for k in rng.permutation(n_params):
            proposal = theta.copy()
            proposal[k] = conditional_draw(template, theta, int(k), states, trace, rng)
            model_p = instantiate(template, proposal)
            vf_p = solve(model_p, solver_cfg)
            log_p_new = action_loglik(model_p, vf_p, cfg, trace)
            u = rng.random()
            proposed += 1
            if metropolis_accept(log_p_new, log_p, u):
                theta = proposal
                log_p = log_p_new
                accepted += 1
        if sweep > mcmc_cfg.burn_in and (sweep - mcmc_cfg.burn_in) % mcmc_cfg.thin == 0:
            kept.append(theta.copy())
    return SampleSet(np.asarray(kept), acceptance_rate=accepted / proposed)


def iohmm_gibbs(template: ParametricTemplate, trace: DemoTrace,
                mcmc_cfg: McmcConfig) -> SampleSet:
    """Gibbs sampler for the environment-response posterior only.

    Identical loop to the full sampler with the planner and the Metropolis
    correction removed: every conjugate draw is accepted.
    """
    if len(trace) == 0:
        raise ValueError("iohmm_gibbs needs a non-empty demonstration")
    rng = np.random.default_rng(mcmc_cfg.seed)
    n_params = template.n_params
    for k in range(n_params):
        _check_role(template, k)
    theta = sample_prior(template, rng)
    kept: list[np.ndarray] = []
    for sweep in range(1, mcmc_cfg.total_sweeps + 1):
        model = instantiate(template, theta)
        states = ffbs(model, trace, rng)
        for k in rng.permutation(n_params):
            theta[k] = conditional_draw(template, theta, int(k), states, trace, rng)
        if sweep > mcmc_cfg.burn_in and (sweep - mcmc_cfg.burn_in) % mcmc_cfg.thin == 0:
            kept.append(theta.copy())
    return SampleSet(np.asarray(kept), acceptance_rate=1.0)


def _expected_counts(template: ParametricTemplate, k: int, marginals: np.ndarray,
                     pairs: np.ndarray, trace: DemoTrace) -> tuple[float, float]:
    """Expected tied-cell tallies under exact smoothing (pre-trace state
    included, so the M-step maximizes the full expected complete-data term)."""
    acts = trace.actions
    obs = trace.observations
    successes = failures = 0.0
    if len(trace):
        tsign = template.trans_signs[k]
        step_signs = tsign[:, acts, :].transpose(1, 0, 2)    # (L, S, S)
        successes += float(pairs[step_signs > 0].sum())
        failures += float(pairs[step_signs < 0].sum())
        osign = template.obs_signs[k]
        obs_signs = osign[acts, :, obs]                      # (L, S)
        successes += float(marginals[1:][obs_signs > 0].sum())
        failures += float(marginals[1:][obs_signs < 0].sum())
    isign = template.init_signs[k]
    successes += float(marginals[0][isign > 0].sum())
    failures += float(marginals[0][isign < 0].sum())
    return successes, failures


def iohmm_em(template: ParametricTemplate, trace: DemoTrace,
             em_cfg: EmConfig = EmConfig(), return_history: bool = False):
    """MAP-EM on the environment-response likelihood.

    E-step: exact smoothed marginals.  M-step: per tied probability
    parameter, the pseudo-count ratio (alpha - 1 + c1) / (alpha + beta - 2
    + c1 + c0).  Parameters without probability-cell occurrences stay at
    their prior mean.  Iterates until the response log posterior improves
    by less than ``tol``; that objective never decreases.
    """
    if len(trace) == 0:
        raise ValueError("iohmm_em needs a non-empty demonstration")
    estimable = [k for k in range(template.n_params) if _check_role(template, k)]
    theta = template.prior_means()
    history: list[float] = []
    previous = -math.inf
    for _ in range(em_cfg.max_iterations):
        model = instantiate(template, theta)
        loglik, marginals, pairs = _forward_backward(model, trace)
        objective = loglik + log_prior(template, theta)
        history.append(objective)
        if len(history) > 1 and objective - previous < em_cfg.tol:
            break
        previous = objective
        for k in estimable:
            prior = template.priors[k]
            successes, failures = _expected_counts(template, k, marginals, pairs, trace)
            numerator = prior.alpha - 1.0 + successes
            denominator = prior.alpha + prior.beta - 2.0 + successes + failures
            if denominator > 0:
                theta[k] = min(max(numerator / denominator, PROB_CLAMP), 1.0 - PROB_CLAMP)
    if return_history:
        return theta, history
    return theta


def map_estimate(template: ParametricTemplate, trace: DemoTrace,
                 cfg: PolicyConfig, map_cfg: MapConfig = MapConfig(),
                 solver_cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Gradient-free MAP search over a box-constrained parameter space.

    Runs Powell's direction-set method in a rescaled space (probabilities
    raw, normal components standardized) and returns the best point ever
    evaluated, which is never worse than the start point.  Each objective
    evaluation plans the candidate model for the soft-max expert term.
    """
    if len(trace) == 0 and map_cfg.start is None:
        # no data: the posterior is the prior, still optimized below
        pass
    n_params = template.n_params
    lower = np.empty(n_params)
    upper = np.empty(n_params)
    center = np.zeros(n_params)
    scale = np.ones(n_params)
    for k, prior in enumerate(template.priors):
        if isinstance(prior, BetaPrior):
            lower[k] = map_cfg.probability_margin
            upper[k] = 1.0 - map_cfg.probability_margin
        else:
            assert isinstance(prior, NormalPrior)
            center[k] = prior.mean
            scale[k] = prior.sd
            lower[k] = prior.mean - map_cfg.normal_range_sigmas * prior.sd
            upper[k] = prior.mean + map_cfg.normal_range_sigmas * prior.sd

    start = np.asarray(map_cfg.start, dtype=float) if map_cfg.start is not None \
        else template.prior_means()
    if start.shape != (n_params,):
        raise NoFeasibleStart(f"start must have shape ({n_params},)")
    if np.any(start < lower) or np.any(start > upper):
        raise NoFeasibleStart("start point lies outside the feasible box")

    def to_scaled(theta):
        return (theta - center) / scale

    def from_scaled(x):
        return center + scale * np.clip(x, to_scaled(lower), to_scaled(upper))

    best_theta = start.copy()
    best_value = -math.inf

    def objective(x):
        nonlocal best_theta, best_value
        theta = from_scaled(np.asarray(x, dtype=float))
        val = log_posterior(template, theta, trace, cfg, solver_cfg)
        if val > best_value:
            best_value = val
            best_theta = theta.copy()
        return 1e12 if val == -math.inf else -val

    objective(to_scaled(start))
    optimize.minimize(
        objective,
        to_scaled(start),
        method="Powell",
        bounds=list(zip(to_scaled(lower), to_scaled(upper))),
        tol=map_cfg.step_tol,
        options={"maxfev": map_cfg.max_evaluations},
    )
    return best_theta
