"""Planning over a sampled parameter posterior.

The hidden state is extended with the index of the sampled parameter
vector; the index starts uniform and never changes, so filtering the
extended belief performs Bayesian model averaging while the policy acts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EpisodicTemplate
from .estimators import SampleSet
from .model_family import ParametricTemplate, instantiate
from .pomdp_core import ModelPolicy, PolicyConfig, Pomdp, ValueFunction
from .solver import SolverConfig, solve


@dataclass(frozen=True)
class ExtendedPomdp:
    """A concrete model whose states are (base state, sample index) pairs.

    ``base_state[j]`` and ``sample_index[j]`` map extended state j back to
    its components; blocks never communicate (cross-index transition mass
    is exactly zero) and the initial belief gives each block mass 1/M.
    """

    model: Pomdp
    n_samples: int
    n_base_states: int
    base_state: np.ndarray
    sample_index: np.ndarray


def _as_theta_matrix(samples) -> np.ndarray:
    if isinstance(samples, SampleSet):
        return samples.thetas
    return np.atleast_2d(np.asarray(samples, dtype=float))


def _reject_episodic(template: ParametricTemplate) -> None:
    """Refuse templates with absorbing terminal structure.

    A state that loops onto itself with probability one under every action
    would trap the extended belief inside one episode.
    """
    model = instantiate(template, template.prior_means())
    self_loop = np.array([
        all(model.transition[s, a, s] >= 1.0 - 1e-12 for a in range(model.n_actions))
        for s in range(model.n_states)
    ])
    if self_loop.any():
        names = [model.state_names[s] for s in np.nonzero(self_loop)[0]]
        raise EpisodicTemplate(f"absorbing terminal state(s): {', '.join(names)}")


def extend(samples, template: ParametricTemplate) -> ExtendedPomdp:
    """Build the block-diagonal mixture model over sampled parameters."""
    thetas = _as_theta_matrix(samples)
    n_samples = thetas.shape[0]
    if n_samples < 1:
        raise ValueError("extend needs at least one sample")
    _reject_episodic(template)
    base = instantiate(template, thetas[0])
    n_s, n_a, n_z = base.n_states, base.n_actions, base.n_observations
    n_ext = n_samples * n_s
    transition = np.zeros((n_ext, n_a, n_ext))
    observation = np.zeros((n_a, n_ext, n_z))
    initial = np.zeros(n_ext)
    reward = np.zeros((n_ext, n_a))
    state_names = []
    for m in range(n_samples):
        model = base if m == 0 else instantiate(template, thetas[m])
        lo, hi = m * n_s, (m + 1) * n_s
        transition[lo:hi, :, lo:hi] = model.transition
        observation[:, lo:hi, :] = model.observation
        initial[lo:hi] = model.initial_belief / n_samples
        reward[lo:hi, :] = model.reward
        state_names.extend(f"{name}@{m}" for name in base.state_names)
    extended = Pomdp(
        transition=transition,
        observation=observation,
        initial_belief=initial,
        reward=reward,
        discount=template.discount,
        state_names=tuple(state_names),
        action_names=base.action_names,
        observation_names=base.observation_names,
    )
    return ExtendedPomdp(
        model=extended,
        n_samples=n_samples,
        n_base_states=n_s,
        base_state=np.tile(np.arange(n_s), n_samples),
        sample_index=np.repeat(np.arange(n_samples), n_s),
    )


class PosteriorPolicy(ModelPolicy):
    """Greedy (or soft-max) policy on a solved extended model.

    Filters the extended belief with the extended dynamics; the environment
    only supplies observations.  An observation impossible under every
    sampled model resets the belief to the uniform-over-samples initial one
    (inherited behavior, counted in ``reset_count``).
    """

    def __init__(self, extended: ExtendedPomdp, vf: ValueFunction,
                 policy_cfg: PolicyConfig | None = None):
        super().__init__(extended.model, vf, policy_cfg)
        self.extended = extended

    def sample_marginal(self) -> np.ndarray:
        """Current belief mass per sample index."""
        return np.bincount(self.extended.sample_index, weights=self.belief,
                           minlength=self.extended.n_samples)


def plan_posterior(samples, template: ParametricTemplate,
                   solver_cfg: SolverConfig = SolverConfig(),
                   policy_cfg: PolicyConfig | None = None) -> PosteriorPolicy:
    """Solve the extended model and wrap it as an executable policy.

    With ``policy_cfg`` unset the policy is greedy (the evaluation
    protocol); passing a PolicyConfig selects soft-max execution instead.
    """
    extended = extend(samples, template)
    vf = solve(extended.model, solver_cfg)
    return PosteriorPolicy(extended, vf, policy_cfg)
