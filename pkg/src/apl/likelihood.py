"""Demonstration likelihoods and hidden-state inference.

Two factors make up the demonstration likelihood: the probability of the
observed environment responses (a scaled forward pass over the hidden
chain, with actions treated as exogenous inputs) and the probability that a
soft-max agent picks the demonstrated actions along the filtered belief
path.  Smoothing and posterior state sampling support the baselines that
use only the first factor.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ImpossibleTrace, OutOfSupport
from .model_family import ParametricTemplate, instantiate, log_prior
from .pomdp_core import DemoTrace, PolicyConfig, Pomdp, ValueFunction
from .solver import SolverConfig, solve

# A hidden-state draw aligned with the trace: entry i is the state occupied
# when observation i was emitted.
StateSequence = np.ndarray


def _forward_filter(model: Pomdp, trace: DemoTrace) -> tuple[np.ndarray, np.ndarray, bool]:
    """Scaled forward pass; returns (scales, filtered, ok).

    ``filtered[i]`` is the state posterior after step i+1.  On a zero-scale
    step the pass stops and ok is False.
    """
    length = len(trace)
    n_states = model.n_states
    scales = np.zeros(length)
    filtered = np.zeros((length, n_states))
    current = model.initial_belief
    transition = model.transition
    observation = model.observation
    for i in range(length):
        a = trace.actions[i]
        z = trace.observations[i]
        unnormalized = (current @ transition[:, a, :]) * observation[a, :, z]
        total = unnormalized.sum()
        if total <= 0.0:
            return scales, filtered, False
        scales[i] = total
        current = unnormalized / total
        filtered[i] = current
    return scales, filtered, True


def obs_loglik(model: Pomdp, trace: DemoTrace) -> float:
    """Log-probability of the observations given the actions (forward pass).

    Returns -inf (never raises) when some step has zero probability.
    """
    scales, _, ok = _forward_filter(model, trace)
    if not ok:
        return -math.inf
    return float(np.log(scales).sum()) if len(scales) else 0.0


def action_loglik(model: Pomdp, vf: ValueFunction, cfg: PolicyConfig,
                  trace: DemoTrace) -> float:
    """Log-probability of the demonstrated actions under the soft-max policy.

    The i-th action is scored at the belief holding the first i-1 steps of
    evidence (the first action is scored at the initial belief).  Returns
    -inf if a belief update feeding a later action hits a zero normalizer.
    """
    length = len(trace)
    if length == 0:
        return 0.0
    scales, filtered, ok = _forward_filter(model, trace)
    if not ok and int(np.argmin(scales > 0)) < length - 1:
        return -math.inf
    beliefs = np.vstack([model.initial_belief[None, :], filtered[:length - 1]])
    scaled = cfg.beta * np.maximum.reduceat(beliefs @ vf.stacked.T, vf.offsets,
                                            axis=1)
    scaled -= scaled.max(axis=1, keepdims=True)
    log_probs = scaled - np.log(np.exp(scaled).sum(axis=1, keepdims=True))
    return float(log_probs[np.arange(length), trace.actions].sum())


def log_posterior(template: ParametricTemplate, theta, trace: DemoTrace,
                  cfg: PolicyConfig, solver_cfg: SolverConfig) -> float:
    """Unnormalized log posterior: prior + observation + expert-action terms.

    Solving the instantiated model for the soft-max policy happens once per
    call.  Returns -inf outside the prior support and for impossible traces.
    """
    prior_term = log_prior(template, theta)
    if prior_term == -math.inf:
        return -math.inf
    try:
        model = instantiate(template, theta)
    except OutOfSupport:
        return -math.inf
    obs_term = obs_loglik(model, trace)
    if obs_term == -math.inf:
        return -math.inf
    if len(trace) == 0:
        return prior_term + obs_term
    vf = solve(model, solver_cfg)
    return prior_term + obs_term + action_loglik(model, vf, cfg, trace)


def _forward_backward(model: Pomdp, trace: DemoTrace
                      ) -> tuple[float, np.ndarray, np.ndarray]:
    """Exact smoothing including the pre-trace state.

    Returns (loglik, marginals, pairs) where marginals has L+1 rows (row 0
    is the posterior of the state occupied before the first action) and
    pairs has L entries (entry i couples marginals rows i and i+1).
    """
    length = len(trace)
    n_states = model.n_states
    scales, filtered, ok = _forward_filter(model, trace)
    if not ok:
        step = int(np.argmin(scales > 0)) + 1
        raise ImpossibleTrace(f"trace has zero probability at step {step}")
    transition = model.transition
    observation = model.observation
    marginals = np.empty((length + 1, n_states))
    pairs = np.empty((length, n_states, n_states))
    marginals[0] = model.initial_belief
    if length == 0:
        return 0.0, marginals, pairs
    fwd = np.vstack([model.initial_belief[None, :], filtered])
    back = np.ones(n_states)
    marginals[length] = fwd[length]
    for i in range(length, 0, -1):
        a = trace.actions[i - 1]
        z = trace.observations[i - 1]
        weighted = observation[a, :, z] * back
        pairs[i - 1] = (fwd[i - 1][:, None] * transition[:, a, :]
                        * weighted[None, :]) / scales[i - 1]
        back = (transition[:, a, :] @ weighted) / scales[i - 1]
        marginals[i - 1] = fwd[i - 1] * back
    return float(np.log(scales).sum()), marginals, pairs


def smoothed_marginals(model: Pomdp, trace: DemoTrace
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Exact smoothed posteriors P(s_i | trace) and P(s_i, s_{i+1} | trace).

    Shapes: (L, S) and (L-1, S, S).  Raises ImpossibleTrace when the trace
    has zero probability.
    """
    _, marginals, pairs = _forward_backward(model, trace)
    return marginals[1:], pairs[1:]


def ffbs(model: Pomdp, trace: DemoTrace, seed) -> StateSequence:
    """Draw a hidden-state sequence from its exact posterior given the trace.

    Forward filtering followed by backward sampling; one draw per call,
    reproducible for a given seed.
    """
    rng = np.random.default_rng(seed)
    length = len(trace)
    states = np.empty(length, dtype=np.int64)
    if length == 0:
        return states
    scales, filtered, ok = _forward_filter(model, trace)
    if not ok:
        step = int(np.argmin(scales > 0)) + 1
        raise ImpossibleTrace(f"trace has zero probability at step {step}")
    transition = model.transition

    def draw(weights: np.ndarray) -> int:
        cumulative = np.cumsum(weights)
        idx = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return min(idx, len(weights) - 1)

    states[length - 1] = draw(filtered[length - 1])
    for i in range(length - 2, -1, -1):
        weights = filtered[i] * transition[:, trace.actions[i + 1], states[i + 1]]
        states[i] = draw(weights)
    return states
