"""Parametric POMDP families: tables affine in a parameter vector, with priors.

A template holds one affine expression per table cell, so instantiation is a
pair of tensor contractions, and probability cells that read exactly
``theta_k`` / ``1 - theta_k`` stay recognizable for conjugate updates.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import stats

from .errors import OutOfSupport, ParseError
from .pomdp_core import Pomdp

PROB_CLAMP = 1e-6   # probability parameters are pulled this far off the boundary
_IDENTITY_TOL = 1e-12


@dataclass(frozen=True)
class BetaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Beta hyperparameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    @property
    def mode(self) -> float:
        if self.alpha > 1 and self.beta > 1:
            return (self.alpha - 1) / (self.alpha + self.beta - 2)
        return self.mean

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.beta(self.alpha, self.beta))

    def logpdf(self, x: float) -> float:
        return float(stats.beta.logpdf(x, self.alpha, self.beta))


@dataclass(frozen=True)
class NormalPrior:
    mean: float
    sd: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "sd", float(self.sd))
        if self.sd <= 0:
            raise ValueError("Normal sd must be positive")

    @property
    def mode(self) -> float:
        return self.mean

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.mean, self.sd))

    def logpdf(self, x: float) -> float:
        return float(stats.norm.logpdf(x, self.mean, self.sd))


Prior = Union[BetaPrior, NormalPrior]


@dataclass(frozen=True)
class ParamExpr:
    """Affine expression ``constant + sum(coef * theta[k])``.

    Terms are canonicalized (merged, sorted by parameter index, zero
    coefficients dropped) so equal expressions compare equal.
    """

    constant: float = 0.0
    terms: tuple[tuple[float, int], ...] = ()

    def __post_init__(self):
        merged: dict[int, float] = {}
        for coef, k in self.terms:
            merged[int(k)] = merged.get(int(k), 0.0) + float(coef)
        canon = tuple((coef, k) for k, coef in sorted(merged.items()) if coef != 0.0)
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", canon)

    def __call__(self, theta) -> float:
        return self.constant + sum(coef * theta[k] for coef, k in self.terms)

    def is_exactly(self, k: int) -> bool:
        """True when the expression is literally ``theta_k``."""
        return self.constant == 0.0 and self.terms == ((1.0, k),)

    def is_complement_of(self, k: int) -> bool:
        """True when the expression is literally ``1 - theta_k``."""
        return self.constant == 1.0 and self.terms == ((-1.0, k),)

    def uses(self, k: int) -> bool:
        return any(idx == k for _, idx in self.terms)


def _as_expr(value) -> ParamExpr:
    if isinstance(value, ParamExpr):
        return value
    return ParamExpr(float(value))


def _expr_table(table, shape) -> tuple:
    arr = np.empty(shape, dtype=object)
    flat_in = np.asarray(table, dtype=object).reshape(-1)
    if flat_in.size != arr.size:
        raise ValueError(f"table has {flat_in.size} entries, expected {arr.size}")
    for i, entry in enumerate(flat_in):
        arr.reshape(-1)[i] = _as_expr(entry)

    def nest(a):
        if a.ndim == 1:
            return tuple(a)
        return tuple(nest(sub) for sub in a)

    return nest(arr)


def _const_coef(table, shape, n_params) -> tuple[np.ndarray, np.ndarray]:
    const = np.zeros(shape)
    coef = np.zeros((n_params,) + shape)
    for idx in np.ndindex(shape):
        expr = table
        for i in idx:
            expr = expr[i]
        const[idx] = expr.constant
        for c, k in expr.terms:
            coef[(k,) + idx] = c
    return const, coef


def _sign_table(table, shape, k) -> tuple[np.ndarray, bool]:
    """Classify every cell w.r.t. parameter k: +1 (= theta_k), -1 (= 1-theta_k).

    The second return value is False when k appears in some cell that is not
    one of the two tied forms.
    """
    signs = np.zeros(shape, dtype=np.int8)
    tied = True
    for idx in np.ndindex(shape):
        expr = table
        for i in idx:
            expr = expr[i]
        if expr.is_exactly(k):
            signs[idx] = 1
        elif expr.is_complement_of(k):
            signs[idx] = -1
        elif expr.uses(k):
            tied = False
    return signs, tied


@dataclass(frozen=True)
class ParametricTemplate:
    """A POMDP family: every table cell is affine in the parameter vector."""

    state_names: tuple[str, ...]
    action_names: tuple[str, ...]
    observation_names: tuple[str, ...]
    discount: float
    transition: tuple    # (S)(A)(S) of ParamExpr
    observation: tuple   # (A)(S)(Z) of ParamExpr
    initial: tuple       # (S) of ParamExpr
    reward: tuple        # (S)(A) of ParamExpr
    priors: tuple[Prior, ...]
    param_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "state_names", tuple(self.state_names))
        object.__setattr__(self, "action_names", tuple(self.action_names))
        object.__setattr__(self, "observation_names", tuple(self.observation_names))
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "priors", tuple(self.priors))
        object.__setattr__(self, "param_names", tuple(self.param_names))
        if len(self.param_names) != len(self.priors):
            raise ValueError("param_names and priors must align")
        s, a, z = len(self.state_names), len(self.action_names), len(self.observation_names)
        k = len(self.priors)
        object.__setattr__(self, "transition", _expr_table(self.transition, (s, a, s)))
        object.__setattr__(self, "observation", _expr_table(self.observation, (a, s, z)))
        object.__setattr__(self, "initial", _expr_table(self.initial, (s,)))
        object.__setattr__(self, "reward", _expr_table(self.reward, (s, a)))
        tc, tk = _const_coef(self.transition, (s, a, s), k)
        oc, ok = _const_coef(self.observation, (a, s, z), k)
        ic, ik = _const_coef(self.initial, (s,), k)
        rc, rk = _const_coef(self.reward, (s, a), k)
        object.__setattr__(self, "_tables",
                           {"transition": (tc, tk), "observation": (oc, ok),
                            "initial": (ic, ik), "reward": (rc, rk)})
        trans_signs, obs_signs, init_signs = [], [], []
        prob_param, tied_ok, reward_param = [], [], []
        for idx in range(k):
            ts, t_ok = _sign_table(self.transition, (s, a, s), idx)
            os_, o_ok = _sign_table(self.observation, (a, s, z), idx)
            is_, i_ok = _sign_table(self.initial, (s,), idx)
            trans_signs.append(ts)
            obs_signs.append(os_)
            init_signs.append(is_)
            prob_param.append(bool(ts.any() or os_.any() or is_.any()
                                   or np.abs(tk[idx]).any() or np.abs(ok[idx]).any()
                                   or np.abs(ik[idx]).any()))
            tied_ok.append(bool(t_ok and o_ok and i_ok))
            reward_param.append(bool(np.abs(rk[idx]).any()))
        object.__setattr__(self, "trans_signs", tuple(trans_signs))
        object.__setattr__(self, "obs_signs", tuple(obs_signs))
        object.__setattr__(self, "init_signs", tuple(init_signs))
        object.__setattr__(self, "prob_param", tuple(prob_param))
        object.__setattr__(self, "tied_param", tuple(tied_ok))
        object.__setattr__(self, "reward_param", tuple(reward_param))

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    @property
    def n_actions(self) -> int:
        return len(self.action_names)

    @property
    def n_observations(self) -> int:
        return len(self.observation_names)

    @property
    def n_params(self) -> int:
        return len(self.priors)

    def prior_means(self) -> np.ndarray:
        return np.array([p.mean for p in self.priors])

    def prior_modes(self) -> np.ndarray:
        return np.array([p.mode for p in self.priors])


def instantiate(template: ParametricTemplate, theta) -> Pomdp:
    """Evaluate the template at theta and build the concrete model.

    Probability components (Beta priors) are accepted on the closed [0, 1]
    and clamped to [PROB_CLAMP, 1 - PROB_CLAMP] so boundary proposals never
    produce degenerate zero rows; anything farther out raises OutOfSupport.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (template.n_params,):
        raise ValueError(f"theta must have shape ({template.n_params},), got {theta.shape}")
    clamped = theta.copy()
    for k, prior in enumerate(template.priors):
        if isinstance(prior, BetaPrior):
            if not (0.0 <= clamped[k] <= 1.0):
                raise OutOfSupport(
                    f"{template.param_names[k]}={clamped[k]!r} outside [0, 1]")
            clamped[k] = min(max(clamped[k], PROB_CLAMP), 1.0 - PROB_CLAMP)
        elif not np.isfinite(clamped[k]):
            raise OutOfSupport(f"{template.param_names[k]} must be finite")

    def evaluate(name, clip):
        const, coef = template._tables[name]
        table = const + np.tensordot(clamped, coef, axes=1)
        if clip:
            np.clip(table, 0.0, 1.0, out=table)
        return table

    return Pomdp(
        transition=evaluate("transition", clip=True),
        observation=evaluate("observation", clip=True),
        initial_belief=evaluate("initial", clip=True),
        reward=evaluate("reward", clip=False),
        discount=template.discount,
        state_names=template.state_names,
        action_names=template.action_names,
        observation_names=template.observation_names,
    )


def sample_prior(template: ParametricTemplate, seed) -> np.ndarray:
    """One independent draw per parameter from its prior."""
    rng = np.random.default_rng(seed)
    return np.array([p.sample(rng) for p in template.priors])


def log_prior(template: ParametricTemplate, theta) -> float:
    """Sum of component log densities; -inf outside the support."""
    theta = np.asarray(theta, dtype=float)
    total = 0.0
    for prior, x in zip(template.priors, theta):
        total += prior.logpdf(float(x))
    return float(total)


def validate_template(template: ParametricTemplate) -> list[str]:
    """Check distribution identities symbolically and at sampled parameters.

    Returns human-readable violations; an empty list means the template is
    valid.  Nothing is raised.
    """
    problems: list[str] = []
    supports = []
    for prior in template.priors:
        if isinstance(prior, BetaPrior):
            supports.append((0.0, 1.0))
        else:
            supports.append((-np.inf, np.inf))

    def check_rows(name, rows):
        for label, row in rows:
            const_sum = sum(expr.constant for expr in row)
            if abs(const_sum - 1.0) > _IDENTITY_TOL:
                problems.append(f"{name} {label}: row sum != 1 (constants sum to {const_sum})")
            coef_sums: dict[int, float] = {}
            for expr in row:
                for coef, k in expr.terms:
                    coef_sums[k] = coef_sums.get(k, 0.0) + coef
            for k, total in coef_sums.items():
                if abs(total) > _IDENTITY_TOL:
                    problems.append(
                        f"{name} {label}: row sum != 1 "
                        f"({template.param_names[k]} coefficients sum to {total})")

    def check_range(name, label, expr):
        lo = hi = expr.constant
        for coef, k in expr.terms:
            s_lo, s_hi = supports[k]
            bounds = sorted((coef * s_lo, coef * s_hi))
            lo += bounds[0]
            hi += bounds[1]
        if lo < -_IDENTITY_TOL or hi > 1.0 + _IDENTITY_TOL:
            problems.append(f"{name} {label}: range exceeds [0, 1] ([{lo}, {hi}])")

    s, a, z = template.n_states, template.n_actions, template.n_observations
    check_rows("transition", [((si, ai), template.transition[si][ai])
                              for si in range(s) for ai in range(a)])
    check_rows("observation", [((ai, si), template.observation[ai][si])
                               for ai in range(a) for si in range(s)])
    check_rows("initial", [("b0", template.initial)])
    for si in range(s):
        for ai in range(a):
            for sj in range(s):
                check_range("transition", (si, ai, sj), template.transition[si][ai][sj])
    for ai in range(a):
        for si in range(s):
            for zi in range(z):
                check_range("observation", (ai, si, zi), template.observation[ai][si][zi])
    for si in range(s):
        check_range("initial", si, template.initial[si])

    if not problems:
        rng = np.random.default_rng(0)
        for _ in range(100):
            theta = np.array([p.sample(rng) for p in template.priors])
            try:
                instantiate(template, theta)
            except Exception as exc:  # noqa: BLE001 - report, never raise
                problems.append(f"instantiation failed at a prior sample: {exc}")
                break
    return problems


def tiger_template() -> ParametricTemplate:
    """Two-door tiger task with four uncertain parameters.

    theta = (p_i, p_l, p_r, r_t): p_i is the chance the tiger sits (and, after
    a door opens, reappears) behind the left door, p_l / p_r are the listening
    accuracies on each side, r_t the penalty for opening the tiger's door.
    Opening emits an uninformative (uniform) observation and re-draws the
    tiger's position, which makes the task non-episodic: a fixed-length run
    is one continuous filtered sequence and episode counts are emergent.
    """
    p_i, p_l, p_r, _r_t = range(4)
    pi = ParamExpr(0.0, ((1.0, p_i),))
    not_pi = ParamExpr(1.0, ((-1.0, p_i),))
    pl = ParamExpr(0.0, ((1.0, p_l),))
    not_pl = ParamExpr(1.0, ((-1.0, p_l),))
    pr = ParamExpr(0.0, ((1.0, p_r),))
    not_pr = ParamExpr(1.0, ((-1.0, p_r),))
    rt = ParamExpr(0.0, ((1.0, _r_t),))

    listen_left = (1.0, 0.0)
    listen_right = (0.0, 1.0)
    reopen = (pi, not_pi)
    transition = (
        (listen_left, reopen, reopen),    # from tiger-left: listen, open-left, open-right
        (listen_right, reopen, reopen),   # from tiger-right
    )
    uniform = (0.5, 0.5)
    observation = (
        ((pl, not_pl), (not_pr, pr)),     # listen: arrival state left / right
        (uniform, uniform),               # open-left
        (uniform, uniform),               # open-right
    )
    initial = (pi, not_pi)
    reward = (
        (-1.0, rt, 10.0),                 # tiger-left: listen, open-left, open-right
        (-1.0, 10.0, rt),                 # tiger-right
    )
    return ParametricTemplate(
        state_names=("tiger-left", "tiger-right"),
        action_names=("listen", "open-left", "open-right"),
        observation_names=("hear-left", "hear-right"),
        discount=0.9,
        transition=transition,
        observation=observation,
        initial=initial,
        reward=reward,
        priors=(BetaPrior(3, 3), BetaPrior(5, 3), BetaPrior(5, 3), NormalPrior(-50, 50)),
        param_names=("p_i", "p_l", "p_r", "r_t"),
    )


# --- expression text format -------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*]))")


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None or match.end() == pos:
            if text[pos:].strip():
                raise ParseError(f"bad character in expression {text!r} at offset {pos}")
            break
        pos = match.end()
        kind = match.lastgroup
        tokens.append((kind, match.group(kind)))
    return tokens


def parse_expr(text: str, param_index: dict[str, int]) -> ParamExpr:
    """Parse ``term (('+'|'-') term)*`` with terms NUMBER, NUMBER*NAME or NAME."""
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError(f"empty expression {text!r}")
    pos = 0
    constant = 0.0
    terms: list[tuple[float, int]] = []

    def take_sign() -> float:
        nonlocal pos
        sign = 1.0
        if pos < len(tokens) and tokens[pos][0] == "op" and tokens[pos][1] in "+-":
            sign = -1.0 if tokens[pos][1] == "-" else 1.0
            pos += 1
        return sign

    first = True
    while pos < len(tokens):
        if first:
            sign = take_sign()
            first = False
        else:
            if tokens[pos][0] != "op" or tokens[pos][1] not in "+-":
                raise ParseError(f"expected '+' or '-' in {text!r}")
            sign = -1.0 if tokens[pos][1] == "-" else 1.0
            pos += 1
        if pos >= len(tokens):
            raise ParseError(f"dangling operator in {text!r}")
        kind, value = tokens[pos]
        if kind == "num":
            number = sign * float(value)
            pos += 1
            if pos < len(tokens) and tokens[pos] == ("op", "*"):
                pos += 1
                if pos >= len(tokens) or tokens[pos][0] != "name":
                    raise ParseError(f"expected parameter name after '*' in {text!r}")
                name = tokens[pos][1]
                if name not in param_index:
                    raise ParseError(f"unknown parameter {name!r} in {text!r}")
                terms.append((number, param_index[name]))
                pos += 1
            else:
                constant += number
        elif kind == "name":
            if value not in param_index:
                raise ParseError(f"unknown parameter {value!r} in {text!r}")
            terms.append((sign, param_index[value]))
            pos += 1
        else:
            raise ParseError(f"unexpected token {value!r} in {text!r}")
    return ParamExpr(constant, tuple(terms))


def format_expr(expr: ParamExpr, param_names) -> str:
    pieces: list[tuple[float, str]] = []
    if expr.constant != 0.0 or not expr.terms:
        pieces.append((expr.constant, repr(expr.constant)
                       if expr.constant >= 0 else repr(-expr.constant)))
    for coef, k in expr.terms:
        magnitude = abs(coef)
        body = param_names[k] if magnitude == 1.0 else f"{repr(magnitude)}*{param_names[k]}"
        pieces.append((coef, body))
    parts = []
    for i, (signed, body) in enumerate(pieces):
        if i == 0:
            parts.append(f"-{body}" if signed < 0 else body)
        else:
            parts.append(f"- {body}" if signed < 0 else f"+ {body}")
    return " ".join(parts)


# --- JSON template format ---------------------------------------------------

def template_to_dict(template: ParametricTemplate) -> dict:
    names = template.param_names

    def fmt_table(table):
        if isinstance(table, ParamExpr):
            return format_expr(table, names)
        return [fmt_table(entry) for entry in table]

    params = []
    for name, prior in zip(names, template.priors):
        if isinstance(prior, BetaPrior):
            params.append({"name": name, "beta": [prior.alpha, prior.beta]})
        else:
            params.append({"name": name, "normal": [prior.mean, prior.sd]})
    return {
        "states": list(template.state_names),
        "actions": list(template.action_names),
        "observations": list(template.observation_names),
        "discount": template.discount,
        "params": params,
        "transition": fmt_table(template.transition),
        "observation": fmt_table(template.observation),
        "initial": fmt_table(template.initial),
        "reward": fmt_table(template.reward),
    }


def template_from_dict(data: dict) -> ParametricTemplate:
    priors = []
    names = []
    for entry in data["params"]:
        names.append(entry["name"])
        if "beta" in entry:
            priors.append(BetaPrior(*entry["beta"]))
        elif "normal" in entry:
            priors.append(NormalPrior(*entry["normal"]))
        else:
            raise ParseError(f"parameter {entry.get('name')!r} needs 'beta' or 'normal'")
    index = {name: k for k, name in enumerate(names)}

    def parse_table(table):
        if isinstance(table, str):
            return parse_expr(table, index)
        if isinstance(table, (int, float)):
            return ParamExpr(float(table))
        return [parse_table(entry) for entry in table]

    return ParametricTemplate(
        state_names=tuple(data["states"]),
        action_names=tuple(data["actions"]),
        observation_names=tuple(data["observations"]),
        discount=float(data["discount"]),
        transition=parse_table(data["transition"]),
        observation=parse_table(data["observation"]),
        initial=parse_table(data["initial"]),
        reward=parse_table(data["reward"]),
        priors=tuple(priors),
        param_names=tuple(names),
    )


def save_template(path, template: ParametricTemplate) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(template_to_dict(template), handle, indent=2)
        handle.write("\n")


def load_template(path) -> ParametricTemplate:
    with open(path, "r", encoding="utf-8") as handle:
        return template_from_dict(json.load(handle))
