"""Point-based value iteration over a sampled set of reachable beliefs.

Every action's vector set is seeded with the value of blindly repeating that
action forever and is never emptied, so Q(b, a) stays defined for all
actions (soft-max policies need it even for dominated actions).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import InvalidModel
from .pomdp_core import AlphaVector, Pomdp, ValueFunction, validate_pomdp


@dataclass(frozen=True)
class SolverConfig:
    precision: float = 1e-3       # stop when no point improves by more than this
    max_iterations: int = 500
    time_budget: float = 0.0      # wall-clock seconds; 0 disables the budget
    belief_set_limit: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.precision <= 0.0:
            raise ValueError("precision must be > 0")
        if self.belief_set_limit < 1:
            raise ValueError("belief_set_limit must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.time_budget < 0.0:
            raise ValueError("time_budget must be >= 0")


def blind_policy_alpha(model: Pomdp, action: int) -> np.ndarray:
    """Exact value of repeating ``action`` forever, per start state."""
    t = model.transition[:, action, :]
    r = model.reward[:, action]
    return np.linalg.solve(np.eye(model.n_states) - model.discount * t, r)


def _backup_batch(model: Pomdp, stacked: np.ndarray,
                  beliefs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bellman backup of every belief against a stacked vector matrix.

    Returns ``values`` (n, A) with the backed-up value per action and
    ``vectors`` (A, n, S) with the corresponding alpha vectors.  The backup
    maximizes over all vectors regardless of their action set.
    """
    n, n_states = beliefs.shape
    n_actions = model.n_actions
    n_obs = model.n_observations
    gamma = model.discount
    values = np.empty((n, n_actions))
    vectors = np.empty((n_actions, n, n_states))
    for a in range(n_actions):
        t_a = model.transition[:, a, :]
        o_a = model.observation[a]
        predicted = beliefs @ t_a
        acc = np.tile(model.reward[:, a], (n, 1))
        for z in range(n_obs):
            weights = o_a[:, z]
            successors = predicted * weights          # unnormalized next beliefs
            best = np.argmax(successors @ stacked.T, axis=1)
            projected = stacked @ (t_a * weights).T   # row i: backproject alpha_i
            acc += gamma * projected[best]
        vectors[a] = acc
        values[:, a] = np.einsum("ns,ns->n", acc, beliefs)
    return values, vectors


def point_backup(model: Pomdp, vf: ValueFunction, belief) -> AlphaVector:
    """One backup at ``belief``: the maximizing action's improved vector."""
    b = np.asarray(belief, dtype=float)[None, :]
    values, vectors = _backup_batch(model, vf.stacked, b)
    best = int(values[0].argmax())
    return AlphaVector(best, vectors[best, 0])


def _expand_belief_set(model: Pomdp, config: SolverConfig) -> np.ndarray:
    """Grow a belief set from b0, always adding the candidate successor
    farthest (L1) from the points kept so far.

    Each added belief contributes the updated beliefs of every action and
    every positive-probability observation branch to the candidate pool, so
    both sides of asymmetric belief trees get covered.  Stops at the size
    limit or when every candidate already lies in the set.
    """
    n_states = model.n_states
    n_actions = model.n_actions
    n_obs = model.n_observations
    limit = config.belief_set_limit

    points = np.empty((limit, n_states))
    points[0] = model.initial_belief
    n_points = 1

    pool: list[np.ndarray] = []
    pool_dist: list[float] = []

    def push_successors(belief: np.ndarray) -> None:
        for a in range(n_actions):
            predicted = belief @ model.transition[:, a, :]
            for z in range(n_obs):
                unnormalized = predicted * model.observation[a, :, z]
                total = unnormalized.sum()
                if total <= 0.0:
                    continue
                successor = unnormalized / total
                dist = np.abs(points[:n_points] - successor).sum(axis=1).min()
                pool.append(successor)
                pool_dist.append(float(dist))

    push_successors(points[0])
    while n_points < limit and pool:
        farthest = int(np.argmax(pool_dist))
        if pool_dist[farthest] < 1e-9:
            break
        new_point = pool.pop(farthest)
        pool_dist.pop(farthest)
        points[n_points] = new_point
        n_points += 1
        if pool:
            deltas = np.abs(np.asarray(pool) - new_point).sum(axis=1)
            pool_dist = list(np.minimum(pool_dist, deltas))
        push_successors(new_point)
    return points[:n_points].copy()


def solve(model: Pomdp, config: SolverConfig = SolverConfig()) -> ValueFunction:
    """Approximate the optimal value function by point-based backups.

    Expands a reachable belief set from the initial belief, then sweeps
    backups over it until the largest per-point improvement drops below
    ``config.precision`` (or iteration/time budgets run out).  Deterministic
    for a fixed (model, config, seed).
    """
    problems = validate_pomdp(model)
    if problems:
        raise InvalidModel("; ".join(problems))
    n_actions = model.n_actions
    gammas = [blind_policy_alpha(model, a)[None, :] for a in range(n_actions)]
    points = _expand_belief_set(model, config)
    deadline = time.monotonic() + config.time_budget if config.time_budget > 0 else None

    # Value at the retained points; union + per-point-winner pruning keep it
    # exact across sweeps, so it never needs recomputing from scratch.
    current = (points @ np.vstack(gammas).T).max(axis=1)
    row_index = np.arange(len(points))
    for _ in range(config.max_iterations):
        values, vectors = _backup_batch(model, np.vstack(gammas), points)
        best_actions = values.argmax(axis=1)
        new_values = values[row_index, best_actions]
        improvement = float(np.maximum(new_values - current, 0.0).max())
        current = np.maximum(current, new_values)
        for a in range(n_actions):
            fresh = vectors[a][best_actions == a]
            if len(fresh):
                combined = np.unique(np.vstack([gammas[a], fresh]), axis=0)
                keep = np.unique((combined @ points.T).argmax(axis=0))
                gammas[a] = combined[keep]
        if improvement < config.precision:
            break
        if deadline is not None and time.monotonic() > deadline:
            break
    return ValueFunction(tuple(gammas), points=points)
