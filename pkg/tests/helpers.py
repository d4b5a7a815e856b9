"""Shared test utilities: random instances and independent brute-force oracles."""

import itertools
import math

import numpy as np

import apl

TIGER_TRUE = np.array([0.6, 0.85, 0.85, -100.0])


def random_pomdp(rng, n_states=3, n_actions=2, n_obs=2, discount=0.9,
                 reward_scale=1.0) -> apl.Pomdp:
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    observation = rng.dirichlet(np.ones(n_obs), size=(n_actions, n_states))
    initial = rng.dirichlet(np.ones(n_states))
    reward = rng.normal(0.0, reward_scale, size=(n_states, n_actions))
    return apl.Pomdp(transition, observation, initial, reward, discount)


def random_trace(rng, model: apl.Pomdp, length: int) -> apl.DemoTrace:
    """A trace sampled from the model itself (never impossible), with
    uniformly random actions."""
    state = rng.choice(model.n_states, p=model.initial_belief)
    actions, observations = [], []
    for _ in range(length):
        a = int(rng.integers(model.n_actions))
        state = rng.choice(model.n_states, p=model.transition[state, a])
        z = rng.choice(model.n_observations, p=model.observation[a, state])
        actions.append(a)
        observations.append(z)
    return apl.DemoTrace(np.array(actions), np.array(observations))


def sequence_probability(model: apl.Pomdp, trace: apl.DemoTrace, seq) -> float:
    """Complete-data probability of (observations, hidden sequence) given
    actions, with the pre-trace state marginalized out."""
    a0, z0 = trace.actions[0], trace.observations[0]
    prob = float(model.initial_belief @ model.transition[:, a0, seq[0]])
    prob *= model.observation[a0, seq[0], z0]
    for i in range(1, len(trace)):
        a, z = trace.actions[i], trace.observations[i]
        prob *= model.transition[seq[i - 1], a, seq[i]]
        prob *= model.observation[a, seq[i], z]
    return prob


def brute_force_obs_loglik(model: apl.Pomdp, trace: apl.DemoTrace) -> float:
    """Sum the complete-data likelihood over all |S|^L hidden sequences."""
    if len(trace) == 0:
        return 0.0
    total = 0.0
    for seq in itertools.product(range(model.n_states), repeat=len(trace)):
        total += sequence_probability(model, trace, seq)
    return math.log(total) if total > 0 else -math.inf


def brute_force_smoothed(model: apl.Pomdp, trace: apl.DemoTrace):
    """Exact smoothed marginals and pairwise posteriors by enumeration."""
    length = len(trace)
    n = model.n_states
    marginals = np.zeros((length, n))
    pairs = np.zeros((length - 1, n, n)) if length > 1 else np.zeros((0, n, n))
    total = 0.0
    for seq in itertools.product(range(n), repeat=length):
        p = sequence_probability(model, trace, seq)
        total += p
        for i, s in enumerate(seq):
            marginals[i, s] += p
        for i in range(length - 1):
            pairs[i, seq[i], seq[i + 1]] += p
    return marginals / total, pairs / total


def greedy_rollout_returns(model: apl.Pomdp, vf: apl.ValueFunction,
                           start_beliefs: np.ndarray, horizon: int,
                           n_rollouts: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized discounted returns of the greedy policy from each start
    belief; independent of `simulate`.  Returns per-point (mean, stderr)."""
    rng = np.random.default_rng(seed)
    n_points = len(start_beliefs)
    total = n_points * n_rollouts
    beliefs = np.repeat(start_beliefs, n_rollouts, axis=0)
    cumulative = np.cumsum(beliefs, axis=1)
    states = (cumulative < rng.random(total)[:, None]).sum(axis=1)
    t_cum = np.cumsum(model.transition, axis=2)
    o_cum = np.cumsum(model.observation, axis=2)
    stacked = vf.stacked
    offsets = vf.offsets
    returns = np.zeros(total)
    factor = 1.0
    for _ in range(horizon):
        q = np.maximum.reduceat(beliefs @ stacked.T, offsets, axis=1)
        acts = q.argmax(axis=1)
        returns += factor * model.reward[states, acts]
        rows = t_cum[states, acts]
        states = (rows < rng.random(total)[:, None]).sum(axis=1)
        obs_rows = o_cum[acts, states]
        obs = (obs_rows < rng.random(total)[:, None]).sum(axis=1)
        trans = model.transition.transpose(1, 0, 2)[acts]
        predicted = np.einsum("ns,nst->nt", beliefs, trans)
        weights = model.observation[acts, :, obs]  # (total, S) via advanced indexing
        unnormalized = predicted * weights
        beliefs = unnormalized / unnormalized.sum(axis=1, keepdims=True)
        factor *= model.discount
    grouped = returns.reshape(n_points, n_rollouts)
    return grouped.mean(axis=1), grouped.std(axis=1, ddof=1) / math.sqrt(n_rollouts)


def replicate_rewards(model: apl.Pomdp, make_policy, n_runs: int, steps: int,
                      seed0: int) -> np.ndarray:
    """Average rewards of independent simulate runs (fresh policy each run)."""
    rewards = []
    for i in range(n_runs):
        _, avg = apl.simulate(model, make_policy(), steps, seed0 + i)
        rewards.append(avg)
    return np.array(rewards)
