"""Finite POMDPs: belief filtering, value functions, policies, simulation, traces.

Model convention: taking action ``a`` in hidden state ``s`` yields reward
``R(s, a)``, moves the environment to ``s'`` with probability ``T(s, a, s')``,
and then emits observation ``z`` with probability ``O(a, s', z)`` from the
arrival state.  Beliefs are plain probability vectors over states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import InvalidModel, ParseError, ZeroProbabilityObservation

PROB_TOL = 1e-9
TRACE_HEADER = "#apl-trace v1"


def _readonly(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _default_names(prefix: str, n: int) -> tuple[str, ...]:
    return tuple(f"{prefix}{i}" for i in range(n))


@dataclass(frozen=True)
class Pomdp:
    """A concrete finite POMDP with tabular dynamics.

    transition      (S, A, S) array, T[s, a, s'].
    observation     (A, S, Z) array, O[a, s', z] for the arrival state s'.
    initial_belief  (S,) probability vector.
    reward          (S, A) array in task-reward units.
    discount        gamma in [0, 1).
    """

    transition: np.ndarray
    observation: np.ndarray
    initial_belief: np.ndarray
    reward: np.ndarray
    discount: float
    state_names: tuple[str, ...] = ()
    action_names: tuple[str, ...] = ()
    observation_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "transition", _readonly(self.transition))
        object.__setattr__(self, "observation", _readonly(self.observation))
        object.__setattr__(self, "initial_belief", _readonly(self.initial_belief))
        object.__setattr__(self, "reward", _readonly(self.reward))
        object.__setattr__(self, "discount", float(self.discount))
        s = self.transition.shape[0] if self.transition.ndim == 3 else 0
        a = self.transition.shape[1] if self.transition.ndim == 3 else 0
        z = self.observation.shape[2] if self.observation.ndim == 3 else 0
        object.__setattr__(self, "state_names",
                           tuple(self.state_names) or _default_names("s", s))
        object.__setattr__(self, "action_names",
                           tuple(self.action_names) or _default_names("a", a))
        object.__setattr__(self, "observation_names",
                           tuple(self.observation_names) or _default_names("z", z))
        problems = validate_pomdp(self)
        if problems:
            raise InvalidModel("; ".join(problems))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[2]


def validate_pomdp(model: Pomdp) -> list[str]:
    """Return human-readable invariant violations (empty when valid)."""
    problems: list[str] = []
    t, o, b0, r = model.transition, model.observation, model.initial_belief, model.reward
    if t.ndim != 3 or t.shape[0] != t.shape[2]:
        return [f"transition must be (S, A, S), got {t.shape}"]
    s, a = t.shape[0], t.shape[1]
    if o.ndim != 3 or o.shape[0] != a or o.shape[1] != s:
        return [f"observation must be (A, S, Z), got {o.shape}"]
    if b0.shape != (s,):
        return [f"initial_belief must be ({s},), got {b0.shape}"]
    if r.shape != (s, a):
        return [f"reward must be ({s}, {a}), got {r.shape}"]
    for arr, label in ((t, "transition"), (o, "observation"), (b0, "initial_belief")):
        if arr.min() < -PROB_TOL or arr.max() > 1.0 + PROB_TOL:
            problems.append(f"{label} entries outside [0, 1]")
    if np.abs(t.sum(axis=2) - 1.0).max() > PROB_TOL:
        problems.append("transition rows do not sum to 1")
    if np.abs(o.sum(axis=2) - 1.0).max() > PROB_TOL:
        problems.append("observation rows do not sum to 1")
    if abs(b0.sum() - 1.0) > PROB_TOL:
        problems.append("initial belief does not sum to 1")
    if not np.all(np.isfinite(r)):
        problems.append("reward entries must be finite")
    if not (0.0 <= model.discount < 1.0):
        problems.append(f"discount must be in [0, 1), got {model.discount}")
    if len(model.state_names) != s or len(model.action_names) != a \
            or len(model.observation_names) != o.shape[2]:
        problems.append("name tuples do not match table sizes")
    return problems


class BeliefUpdate(NamedTuple):
    """Result of one Bayes filter step."""

    belief: np.ndarray
    probability: float  # P(z | b, a): the step's observation probability


def belief_update(model: Pomdp, belief, action: int, observation: int) -> BeliefUpdate:
    """Filter the belief through one (action, observation) step.

    The returned ``probability`` is the normalizer, i.e. the one-step
    probability of seeing ``observation`` from ``belief`` under ``action``.
    """
    b = np.asarray(belief, dtype=float)
    predicted = b @ model.transition[:, action, :]
    unnormalized = predicted * model.observation[action, :, observation]
    total = float(unnormalized.sum())
    if total <= 0.0:
        raise ZeroProbabilityObservation(
            f"observation {observation} impossible after action {action}")
    return BeliefUpdate(unnormalized / total, total)


@dataclass(frozen=True)
class AlphaVector:
    """A per-state value vector tagged with the action it backs up."""

    action: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action", int(self.action))
        object.__setattr__(self, "values", _readonly(self.values))
        if not np.all(np.isfinite(self.values)):
            raise ValueError("alpha vector values must be finite")


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Per-action sets of alpha vectors realizing a piecewise-linear value.

    ``alpha_sets[a]`` is an (n_a, S) matrix with n_a >= 1; Q(b, a) is the
    best inner product within set a.  ``points`` optionally carries the
    belief set retained by the solver that produced this value function.
    """

    alpha_sets: tuple[np.ndarray, ...]
    points: np.ndarray | None = None

    def __post_init__(self):
        sets = []
        n_states = None
        for a, alphas in enumerate(self.alpha_sets):
            arr = np.atleast_2d(np.asarray(alphas, dtype=float))
            if arr.shape[0] < 1:
                raise ValueError(f"alpha set for action {a} is empty")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"alpha set for action {a} has non-finite values")
            if n_states is None:
                n_states = arr.shape[1]
            elif arr.shape[1] != n_states:
                raise ValueError("alpha sets disagree on state count")
            sets.append(_readonly(arr))
        if not sets:
            raise ValueError("value function needs at least one action")
        object.__setattr__(self, "alpha_sets", tuple(sets))
        counts = [len(s) for s in sets]
        object.__setattr__(self, "stacked", _readonly(np.vstack(sets)))
        object.__setattr__(self, "offsets",
                           np.concatenate(([0], np.cumsum(counts)[:-1])).astype(np.intp))
        object.__setattr__(self, "row_actions",
                           _readonly(np.repeat(np.arange(len(sets)), counts), dtype=np.intp))
        if self.points is not None:
            object.__setattr__(self, "points", _readonly(self.points))

    @property
    def n_actions(self) -> int:
        return len(self.alpha_sets)

    @property
    def n_states(self) -> int:
        return self.alpha_sets[0].shape[1]


def action_values(vf: ValueFunction, belief) -> np.ndarray:
    """Q(b, a) for every action: best alpha inner product within each set."""
    scores = vf.stacked @ np.asarray(belief, dtype=float)
    return np.maximum.reduceat(scores, vf.offsets)


def action_values_batch(vf: ValueFunction, beliefs: np.ndarray) -> np.ndarray:
    """Q values for a (n, S) batch of beliefs; returns (n, A)."""
    scores = np.asarray(beliefs, dtype=float) @ vf.stacked.T
    return np.maximum.reduceat(scores, vf.offsets, axis=1)


def value(vf: ValueFunction, belief) -> float:
    """V(b) = max_a Q(b, a)."""
    return float(action_values(vf, belief).max())


@dataclass(frozen=True)
class PolicyConfig:
    """Soft-max action selection; beta is the inverse temperature (0 = uniform)."""

    beta: float

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        if not math.isfinite(self.beta) or self.beta < 0.0:
            raise ValueError(f"beta must be finite and >= 0, got {self.beta}")


def softmax_policy(vf: ValueFunction, cfg: PolicyConfig, belief) -> np.ndarray:
    """Boltzmann distribution over actions, exp(beta * Q) renormalized.

    The max Q is subtracted before exponentiation so large value scales
    cannot overflow.
    """
    scaled = cfg.beta * action_values(vf, belief)
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def greedy_action(vf: ValueFunction, belief) -> int:
    """argmax_a Q(b, a); ties broken toward the lowest action index."""
    return int(np.argmax(action_values(vf, belief)))


@dataclass(frozen=True)
class DemoTrace:
    """A demonstration: step-aligned action and observation index arrays."""

    actions: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        acts = _readonly(np.atleast_1d(self.actions), dtype=np.int64)
        obs = _readonly(np.atleast_1d(self.observations), dtype=np.int64)
        if acts.ndim != 1 or obs.ndim != 1 or len(acts) != len(obs):
            raise ValueError("actions and observations must be equal-length 1-d")
        object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "observations", obs)

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[int, int]]) -> "DemoTrace":
        acts = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
        obs = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
        return cls(acts, obs)

    @classmethod
    def empty(cls) -> "DemoTrace":
        return cls(np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.actions)

    def steps(self) -> Iterator[tuple[int, int]]:
        for a, z in zip(self.actions, self.observations):
            yield int(a), int(z)


def check_trace(model: Pomdp, trace: DemoTrace) -> None:
    """Raise ValueError when trace indices do not fit the model."""
    if len(trace) == 0:
        return
    if trace.actions.min() < 0 or trace.actions.max() >= model.n_actions:
        raise ValueError("trace contains an out-of-range action index")
    if trace.observations.min() < 0 or trace.observations.max() >= model.n_observations:
        raise ValueError("trace contains an out-of-range observation index")


class ModelPolicy:
    """Executable policy that filters its own belief on its own model.

    The simulator's belief argument is ignored; the environment only feeds
    back (action, observation) outcomes via ``observe``.  An observation
    that is impossible under this policy's model resets the internal belief
    to the initial one and bumps ``reset_count``.
    """

    def __init__(self, model: Pomdp, vf: ValueFunction,
                 policy_cfg: PolicyConfig | None = None):
        self.model = model
        self.vf = vf
        self.policy_cfg = policy_cfg
        self.belief = model.initial_belief
        self.reset_count = 0

    def reset(self) -> None:
        self.belief = self.model.initial_belief
        self.reset_count = 0

    def observe(self, action: int, observation: int) -> None:
        try:
            self.belief = belief_update(self.model, self.belief, action, observation).belief
        except ZeroProbabilityObservation:
            self.belief = self.model.initial_belief
            self.reset_count += 1

    def __call__(self, env_belief=None) -> np.ndarray:
        if self.policy_cfg is None:
            dist = np.zeros(self.model.n_actions)
            dist[greedy_action(self.vf, self.belief)] = 1.0
            return dist
        return softmax_policy(self.vf, self.policy_cfg, self.belief)


def _draw(rng: np.random.Generator, cumulative: np.ndarray) -> int:
    idx = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
    return min(idx, len(cumulative) - 1)


def simulate(model: Pomdp, policy, steps: int, seed) -> tuple[DemoTrace, float]:
    """Roll out ``policy`` in ``model`` for ``steps`` steps.

    ``policy`` is a callable mapping the model-filtered belief to an action
    distribution; objects additionally providing ``reset()`` and
    ``observe(action, observation)`` are driven through those hooks, which
    lets belief-tracking policies run against any environment.  Returns the
    (action, observation) trace and the average reward per step,
    reproducibly for a given seed.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rng = np.random.default_rng(seed)
    t_cum = np.cumsum(model.transition, axis=2)
    o_cum = np.cumsum(model.observation, axis=2)
    reset = getattr(policy, "reset", None)
    if reset is not None:
        reset()
    observe = getattr(policy, "observe", None)
    belief = model.initial_belief
    state = _draw(rng, np.cumsum(belief))
    actions = np.empty(steps, dtype=np.int64)
    observations = np.empty(steps, dtype=np.int64)
    total = 0.0
    for t in range(steps):
        action = _draw(rng, np.cumsum(policy(belief)))
        total += model.reward[state, action]
        state = _draw(rng, t_cum[state, action])
        obs = _draw(rng, o_cum[action, state])
        if observe is not None:
            observe(action, obs)
        belief = belief_update(model, belief, action, obs).belief
        actions[t] = action
        observations[t] = obs
    return DemoTrace(actions, observations), total / steps


def generate_demo(model: Pomdp, vf_true: ValueFunction, cfg: PolicyConfig,
                  length: int, seed) -> DemoTrace:
    """Sample an expert demonstration from the soft-max policy over vf_true."""
    if length < 1:
        raise ValueError("length must be >= 1")
    trace, _ = simulate(model, lambda b: softmax_policy(vf_true, cfg, b), length, seed)
    return trace


def format_trace(trace: DemoTrace, action_names: Sequence[str],
                 observation_names: Sequence[str]) -> str:
    """Render a trace in the tab-separated text format (header + one step/line)."""
    lines = [TRACE_HEADER]
    for t, (a, z) in enumerate(trace.steps(), start=1):
        lines.append(f"{t}\t{action_names[a]}\t{observation_names[z]}")
    return "\n".join(lines) + "\n"


def parse_trace(text: str, action_names: Sequence[str],
                observation_names: Sequence[str]) -> DemoTrace:
    """Parse the text trace format; raises ParseError naming the bad line."""
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise ParseError(f"expected header {TRACE_HEADER!r}", line=1)
    action_index = {name: i for i, name in enumerate(action_names)}
    obs_index = {name: i for i, name in enumerate(observation_names)}
    pairs: list[tuple[int, int]] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError("expected 3 tab-separated fields", line=lineno)
        step_text, action_name, obs_name = fields
        try:
            step = int(step_text)
        except ValueError:
            raise ParseError(f"bad step index {step_text!r}", line=lineno) from None
        if step != len(pairs) + 1:
            raise ParseError(f"step index {step} out of order", line=lineno)
        if action_name not in action_index:
            raise ParseError(f"unknown action {action_name!r}", line=lineno)
        if obs_name not in obs_index:
            raise ParseError(f"unknown observation {obs_name!r}", line=lineno)
        pairs.append((action_index[action_name], obs_index[obs_name]))
    if not pairs:
        return DemoTrace.empty()
    return DemoTrace.from_pairs(pairs)


def write_trace(path, trace: DemoTrace, model: Pomdp) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_trace(trace, model.action_names, model.observation_names))


def read_trace(path, model: Pomdp) -> DemoTrace:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_trace(handle.read(), model.action_names, model.observation_names)
