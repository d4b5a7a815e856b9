"""Experiment pipeline: demo generation, estimation, policy evaluation, reports.

One experiment run fans out over (demonstration, estimator) cells, each with
a deterministically derived seed, records everything per cell, and reduces
to summary statistics plus policy-reward histogram data.  Per-cell failures
are recorded and never abort the sweep.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace, asdict

import numpy as np

from .estimators import (
    EmConfig,
    MapConfig,
    McmcConfig,
    SampleSet,
    iohmm_em,
    iohmm_gibbs,
    map_estimate,
    mcmc_posterior,
)
from .model_family import (
    ParametricTemplate,
    instantiate,
    load_template,
    tiger_template,
)
from .planning import plan_posterior
from .pomdp_core import (
    DemoTrace,
    ModelPolicy,
    PolicyConfig,
    format_trace,
    generate_demo,
    parse_trace,
    simulate,
    softmax_policy,
)
from .solver import SolverConfig, solve

log = logging.getLogger(__name__)

TIME_BUDGET_ENV = "APL_TIME_BUDGET_SECS"
KNOWN_ESTIMATORS = ("em", "gibbs", "map", "mcmc")
IOHMM_ESTIMATORS = ("em", "gibbs")   # response-only: no reward information


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment sweep (desk scale by default)."""

    true_theta: tuple[float, ...]
    beta: float = 0.3
    demo_length: int = 100
    n_demos: int = 10
    eval_steps: int = 10_000
    master_seed: int = 0
    estimators: tuple[str, ...] = ("em", "gibbs", "map", "mcmc")
    template_path: str | None = None          # None: built-in tiger family
    mcmc_cfg: McmcConfig = McmcConfig(total_sweeps=500, burn_in=100, thin=10)
    map_cfg: MapConfig = MapConfig()
    em_cfg: EmConfig = EmConfig()
    est_solver: SolverConfig = SolverConfig(belief_set_limit=64, max_iterations=300)
    policy_solver: SolverConfig = SolverConfig()
    out_path: str | None = None
    hist_lo: float = -3.0
    hist_hi: float = 3.0
    hist_width: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "true_theta", tuple(float(x) for x in self.true_theta))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if self.demo_length < 1 or self.n_demos < 1 or self.eval_steps < 1:
            raise ValueError("demo_length, n_demos and eval_steps must be >= 1")
        for name in self.estimators:
            if name not in KNOWN_ESTIMATORS:
                raise ValueError(f"unknown estimator {name!r}")
        if self.hist_width <= 0 or self.hist_hi <= self.hist_lo:
            raise ValueError("bad histogram bounds")

    def load_template(self) -> ParametricTemplate:
        if self.template_path is None:
            return tiger_template()
        return load_template(self.template_path)


def derive_seed(master_seed: int, *key: int) -> int:
    """Stable per-purpose integer seed from the master seed and a key path."""
    sequence = np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1)[0])


@dataclass
class RunRecord:
    demo_index: int
    estimator: str
    seed: int
    eval_seed: int
    wall_clock: float
    point_estimate: list[float] | None = None
    errors: list[float] | None = None
    samples: list[list[float]] | None = None
    sample_sd: list[float] | None = None
    avg_reward: float | None = None
    policy_resets: int = 0
    error: str | None = None


@dataclass
class ResultsBundle:
    param_names: list[str]
    true_theta: list[float]
    prior_means: list[float]
    iohmm_estimable: list[bool]
    beta: float
    demo_length: int
    n_demos: int
    eval_steps: int
    master_seed: int
    estimators: list[str]
    expert_baseline: float
    runs: list[RunRecord] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    histogram: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        data = asdict(self)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ResultsBundle":
        runs = [RunRecord(**record) for record in data.pop("runs")]
        return cls(runs=runs, **data)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")

    @classmethod
    def load(cls, path) -> "ResultsBundle":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_dict(json.load(handle))


def _apply_time_budget(cfg: SolverConfig) -> SolverConfig:
    value = os.environ.get(TIME_BUDGET_ENV)
    if not value:
        return cfg
    return replace(cfg, time_budget=float(value))


def run_estimator(name: str, template: ParametricTemplate, trace: DemoTrace,
                  config: ExperimentConfig, seed: int
                  ) -> tuple[np.ndarray, SampleSet | None]:
    """Run one estimator; returns (point estimate, samples or None)."""
    beta_cfg = PolicyConfig(config.beta)
    est_solver = _apply_time_budget(config.est_solver)
    if name == "map":
        return map_estimate(template, trace, beta_cfg, config.map_cfg, est_solver), None
    if name == "em":
        return iohmm_em(template, trace, config.em_cfg), None
    if name == "gibbs":
        samples = iohmm_gibbs(template, trace, replace(config.mcmc_cfg, seed=seed))
        return samples.mean(), samples
    if name == "mcmc":
        samples = mcmc_posterior(template, trace, beta_cfg,
                                 replace(config.mcmc_cfg, seed=seed), est_solver)
        return samples.mean(), samples
    raise ValueError(f"unknown estimator {name!r}")


def build_policy(name: str, template: ParametricTemplate, point: np.ndarray,
                 samples: SampleSet | None, config: ExperimentConfig):
    """Greedy policy per method: samplers plan over the sampled posterior,
    point estimators over the single instantiated model."""
    policy_solver = _apply_time_budget(config.policy_solver)
    if samples is not None:
        return plan_posterior(samples, template, policy_solver)
    model = instantiate(template, point)
    return ModelPolicy(model, solve(model, policy_solver))


def _aggregate(config: ExperimentConfig, bundle: ResultsBundle) -> None:
    n_params = len(bundle.param_names)
    edges = np.arange(config.hist_lo, config.hist_hi + config.hist_width / 2,
                      config.hist_width)
    bundle.histogram = {
        "lo": config.hist_lo,
        "hi": config.hist_hi,
        "width": config.hist_width,
        "edges": [float(e) for e in edges],
        "counts": {},
        "less": {},
    }
    bundle.aggregates = {}
    for name in bundle.estimators:
        records = [r for r in bundle.runs if r.estimator == name and r.error is None]
        failures = sum(1 for r in bundle.runs if r.estimator == name and r.error is not None)
        agg: dict = {"n": len(records), "failures": failures}
        if records:
            errors = np.array([r.errors for r in records])
            agg["mean_error"] = errors.mean(axis=0).tolist()
            agg["rmse"] = np.sqrt((errors ** 2).mean(axis=0)).tolist()
            sds = [r.sample_sd for r in records if r.sample_sd is not None]
            agg["sd_samples"] = np.array(sds).mean(axis=0).tolist() if sds else None
            rewards = np.array([r.avg_reward for r in records])
            agg["rewards"] = rewards.tolist()
            counts, _ = np.histogram(np.clip(rewards, None, config.hist_hi - 1e-12),
                                     bins=edges)
            bundle.histogram["counts"][name] = counts.tolist()
            bundle.histogram["less"][name] = int((rewards < config.hist_lo).sum())
        else:
            agg["mean_error"] = agg["rmse"] = [float("nan")] * n_params
            agg["sd_samples"] = None
            agg["rewards"] = []
            bundle.histogram["counts"][name] = [0] * (len(edges) - 1)
            bundle.histogram["less"][name] = 0
        bundle.aggregates[name] = agg


def run_experiment(config: ExperimentConfig) -> ResultsBundle:
    """Run the full demonstrate/estimate/plan/evaluate sweep.

    Expert demos come from the soft-max policy over the true model's solved
    value function; each estimator's derived greedy policy is evaluated in
    the true environment.  Everything is reproducible from the master seed;
    per-cell failures are recorded in the bundle.
    """
    template = config.load_template()
    true_theta = np.array(config.true_theta, dtype=float)
    true_model = instantiate(template, true_theta)
    policy_solver = _apply_time_budget(config.policy_solver)
    vf_true = solve(true_model, policy_solver)
    expert_cfg = PolicyConfig(config.beta)
    _, expert_avg = simulate(true_model,
                             lambda b: softmax_policy(vf_true, expert_cfg, b),
                             config.eval_steps, derive_seed(config.master_seed, 3))
    estimable = [template.prob_param[k] for k in range(template.n_params)]
    bundle = ResultsBundle(
        param_names=list(template.param_names),
        true_theta=true_theta.tolist(),
        prior_means=template.prior_means().tolist(),
        iohmm_estimable=estimable,
        beta=config.beta,
        demo_length=config.demo_length,
        n_demos=config.n_demos,
        eval_steps=config.eval_steps,
        master_seed=config.master_seed,
        estimators=list(config.estimators),
        expert_baseline=expert_avg,
    )
    for demo_index in range(config.n_demos):
        demo_seed = derive_seed(config.master_seed, 0, demo_index)
        trace = generate_demo(true_model, vf_true, expert_cfg,
                              config.demo_length, demo_seed)
        for est_index, name in enumerate(config.estimators):
            seed = derive_seed(config.master_seed, 1, demo_index, est_index)
            eval_seed = derive_seed(config.master_seed, 2, demo_index, est_index)
            record = RunRecord(demo_index=demo_index, estimator=name,
                               seed=seed, eval_seed=eval_seed, wall_clock=0.0)
            started = time.perf_counter()
            try:
                point, samples = run_estimator(name, template, trace, config, seed)
                policy = build_policy(name, template, point, samples, config)
                _, avg_reward = simulate(true_model, policy, config.eval_steps, eval_seed)
                record.point_estimate = [float(x) for x in point]
                record.errors = [float(x) for x in point - true_theta]
                if samples is not None:
                    record.samples = samples.thetas.tolist()
                    record.sample_sd = samples.sd().tolist()
                record.avg_reward = float(avg_reward)
                record.policy_resets = getattr(policy, "reset_count", 0)
            except Exception as exc:  # noqa: BLE001 - cell isolation by contract
                record.error = f"{type(exc).__name__}: {exc}"
                log.warning("demo %d estimator %s failed: %s", demo_index, name, exc)
            record.wall_clock = time.perf_counter() - started
            bundle.runs.append(record)
            log.info("demo %d %s done in %.1fs", demo_index, name, record.wall_clock)
    _aggregate(config, bundle)
    if config.out_path:
        bundle.save(config.out_path)
    return bundle


# --- reporting ----------------------------------------------------------------

def _fmt(value, width=10) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a".rjust(width)
    return f"{value:+.3f}".rjust(width)


def report(bundle: ResultsBundle, hist_path=None) -> str:
    """Render the per-parameter summary table; optionally write histogram data.

    Reward-parameter rows are marked n/a for the response-only methods
    (those likelihoods carry no reward information), and the sampled-spread
    row only appears for sampler methods.
    """
    names = bundle.estimators
    lines = []
    lines.append(f"runs: {bundle.n_demos} demos x {bundle.demo_length} steps, "
                 f"beta={bundle.beta}, eval={bundle.eval_steps} steps")
    lines.append(f"expert baseline: {bundle.expert_baseline:+.4f} per step")
    header = f"{'parameter':<12}{'statistic':<14}{'prior-mean':>10}"
    for name in names:
        header += f"{name:>10}"
    lines.append(header)
    lines.append("-" * len(header))
    for k, pname in enumerate(bundle.param_names):
        prior_error = bundle.prior_means[k] - bundle.true_theta[k]
        masked = not bundle.iohmm_estimable[k]
        rows = [("mean-error", "mean_error", _fmt(prior_error)),
                ("rmse", "rmse", "n/a".rjust(10)),
                ("sd-samples", "sd_samples", "n/a".rjust(10))]
        for label, key, prior_cell in rows:
            line = f"{pname if label == 'mean-error' else '':<12}{label:<14}{prior_cell}"
            for name in names:
                agg = bundle.aggregates.get(name, {})
                values = agg.get(key)
                if values is None or (masked and name in IOHMM_ESTIMATORS):
                    line += "n/a".rjust(10)
                else:
                    line += _fmt(values[k])
            lines.append(line)
    lines.append("")
    lines.append(f"{'policy reward':<26}{'':>10}"
                 + "".join(f"{name:>10}" for name in names))
    med_line = f"{'median avg reward':<26}{'':>10}"
    for name in names:
        rewards = bundle.aggregates.get(name, {}).get("rewards", [])
        med_line += _fmt(float(np.median(rewards)) if rewards else None)
    lines.append(med_line)
    table = "\n".join(lines) + "\n"
    if hist_path is not None:
        data = dict(bundle.histogram)
        data["expert_baseline"] = bundle.expert_baseline
        with open(hist_path, "w", encoding="utf-8") as handle:
            json.dump(data, handle, indent=2)
            handle.write("\n")
    return table


# --- trace file IO --------------------------------------------------------------

def write_trace_file(path, trace: DemoTrace, names_source) -> None:
    """Write a trace using the action/observation names of a model or template."""
    text = format_trace(trace, names_source.action_names,
                        names_source.observation_names)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def read_trace_file(path, names_source) -> DemoTrace:
    """Read a trace file; raises ParseError naming the offending line."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return parse_trace(text, names_source.action_names, names_source.observation_names)
