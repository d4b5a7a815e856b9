"""Command-line interface.

Subcommands cover the full pipeline: generate demonstrations, estimate
parameters, build a policy, evaluate it in an environment, and run or
report a whole experiment sweep.  Exit codes: 0 success, 1 configuration
error (bad flags or unreadable inputs), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .errors import AplError
from .estimators import McmcConfig, MapConfig
from .harness import (
    ExperimentConfig,
    ResultsBundle,
    read_trace_file,
    report,
    run_experiment,
    run_estimator,
    write_trace_file,
)
from .model_family import instantiate, load_template, tiger_template
from .planning import PosteriorPolicy, extend
from .pomdp_core import (
    ModelPolicy,
    PolicyConfig,
    ValueFunction,
    generate_demo,
    simulate,
)
from .solver import SolverConfig, solve


class ConfigError(Exception):
    """Bad flags or unreadable input files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _load_template(source: str):
    if source == "tiger":
        return tiger_template()
    try:
        return load_template(source)
    except OSError as exc:
        raise ConfigError(f"cannot read template {source!r}: {exc}") from exc
    except (AplError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad template {source!r}: {exc}") from exc


def _parse_theta(text: str, template) -> np.ndarray:
    try:
        values = np.array([float(x) for x in text.split(",")])
    except ValueError as exc:
        raise ConfigError(f"bad --theta {text!r}: {exc}") from exc
    if values.shape != (template.n_params,):
        raise ConfigError(
            f"--theta needs {template.n_params} comma-separated values, got {len(values)}")
    return values


def _read_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON in {path!r}: {exc}") from exc


def _cmd_gen_demo(args) -> int:
    template = _load_template(args.model)
    theta = _parse_theta(args.theta, template)
    model = instantiate(template, theta)
    vf = solve(model, SolverConfig(seed=args.seed))
    trace = generate_demo(model, vf, PolicyConfig(args.beta), args.steps, args.seed)
    write_trace_file(args.out, trace, template)
    print(f"wrote {len(trace)}-step demo to {args.out}")
    return 0


def _mcmc_config(args) -> McmcConfig:
    return McmcConfig(total_sweeps=args.mcmc_sweeps, burn_in=args.burn_in,
                      thin=args.thin, seed=args.seed)


def _cmd_estimate(args) -> int:
    template = _load_template(args.model)
    try:
        trace = read_trace_file(args.demo, template)
    except OSError as exc:
        raise ConfigError(f"cannot read demo {args.demo!r}: {exc}") from exc
    except AplError as exc:
        raise ConfigError(f"bad demo file {args.demo!r}: {exc}") from exc
    config = ExperimentConfig(
        true_theta=template.prior_means(),  # unused by estimation; required field
        beta=args.beta,
        estimators=(args.method,),
        mcmc_cfg=_mcmc_config(args),
        map_cfg=MapConfig(max_evaluations=args.max_evals),
    )
    started = time.perf_counter()
    point, samples = run_estimator(args.method, template, trace, config, args.seed)
    elapsed = time.perf_counter() - started
    result = {
        "method": args.method,
        "seed": args.seed,
        "beta": args.beta,
        "param_names": list(template.param_names),
        "point_estimate": [float(x) for x in point],
        "samples": samples.thetas.tolist() if samples is not None else None,
        "summaries": {
            name: {
                "estimate": float(point[k]),
                "sample_sd": float(samples.sd()[k]) if samples is not None else None,
            }
            for k, name in enumerate(template.param_names)
        },
        "wall_clock": elapsed,
    }
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(result, handle, indent=2)
        handle.write("\n")
    summary = ", ".join(f"{n}={v:.4g}" for n, v in zip(template.param_names, point))
    print(f"{args.method}: {summary} ({elapsed:.1f}s) -> {args.out}")
    return 0


def _cmd_plan(args) -> int:
    template = _load_template(args.model)
    estimate = _read_json(args.estimate)
    if estimate.get("samples"):
        thetas = np.asarray(estimate["samples"], dtype=float)
        kind = "posterior"
        extended = extend(thetas, template)
        vf = solve(extended.model, SolverConfig(seed=args.seed))
    else:
        thetas = np.asarray([estimate["point_estimate"]], dtype=float)
        kind = "point"
        model = instantiate(template, thetas[0])
        vf = solve(model, SolverConfig(seed=args.seed))
    policy = {
        "kind": kind,
        "thetas": thetas.tolist(),
        "alpha_sets": [alphas.tolist() for alphas in vf.alpha_sets],
    }
    with open(args.out, "w", encoding="utf-8") as handle:
        json.dump(policy, handle, indent=2)
        handle.write("\n")
    print(f"wrote {kind} policy ({len(thetas)} model(s)) to {args.out}")
    return 0


def _policy_from_file(data: dict, template):
    vf = ValueFunction(tuple(np.asarray(a, dtype=float) for a in data["alpha_sets"]))
    thetas = np.asarray(data["thetas"], dtype=float)
    if data["kind"] == "posterior":
        return PosteriorPolicy(extend(thetas, template), vf)
    return ModelPolicy(instantiate(template, thetas[0]), vf)


def _cmd_simulate(args) -> int:
    template = _load_template(args.model)
    theta = _parse_theta(args.theta, template)
    environment = instantiate(template, theta)
    policy_data = _read_json(args.policy)
    policy = _policy_from_file(policy_data, template)
    _, avg_reward = simulate(environment, policy, args.steps, args.seed)
    print(f"average reward per step over {args.steps} steps: {avg_reward:+.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            json.dump({"steps": args.steps, "seed": args.seed,
                       "avg_reward": avg_reward}, handle, indent=2)
            handle.write("\n")
    return 0


def _cmd_experiment(args) -> int:
    template_source = None if args.model == "tiger" else args.model
    template = _load_template(args.model)
    theta = _parse_theta(args.theta, template)
    try:
        config = ExperimentConfig(
            true_theta=tuple(theta),
            beta=args.beta,
            demo_length=args.steps,
            n_demos=args.demos,
            eval_steps=args.eval_steps,
            master_seed=args.seed,
            estimators=tuple(args.estimators.split(",")),
            template_path=template_source,
            mcmc_cfg=_mcmc_config(args),
            out_path=args.out,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    bundle = run_experiment(config)
    print(report(bundle))
    if args.out:
        print(f"results written to {args.out}")
    return 0


def _cmd_report(args) -> int:
    try:
        bundle = ResultsBundle.load(args.results)
    except OSError as exc:
        raise ConfigError(f"cannot read results {args.results!r}: {exc}") from exc
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad results file {args.results!r}: {exc}") from exc
    hist_path = args.hist or (args.out + ".hist.json" if args.out else None)
    table = report(bundle, hist_path=hist_path)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(table)
    print(table, end="")
    if hist_path:
        print(f"histogram data written to {hist_path}")
    return 0


def _add_common(parser, *, theta=False, beta=False, steps=None, seed=True, out=None):
    parser.add_argument("--model", default="tiger",
                        help="template JSON path or 'tiger' (default)")
    if theta:
        parser.add_argument("--theta", required=True,
                            help="comma-separated parameter values")
    if beta:
        parser.add_argument("--beta", type=float, default=0.3,
                            help="soft-max inverse temperature (default 0.3)")
    if steps is not None:
        parser.add_argument("--steps", type=int, default=steps,
                            help=f"number of steps (default {steps})")
    if seed:
        parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    if out is not None:
        parser.add_argument("--out", required=out == "required", default=None,
                            help="output path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="apl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demo", help="sample an expert demonstration")
    _add_common(p, theta=True, beta=True, steps=100, out="required")
    p.set_defaults(func=_cmd_gen_demo)

    p = sub.add_parser("estimate", help="estimate parameters from a demo")
    p.add_argument("--method", required=True, choices=("map", "mcmc", "em", "gibbs"))
    p.add_argument("--demo", required=True, help="trace file path")
    _add_common(p, beta=True, out="required")
    p.add_argument("--mcmc-sweeps", type=int, default=1000)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--thin", type=int, default=10)
    p.add_argument("--max-evals", type=int, default=200,
                   help="MAP objective evaluation budget")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("plan", help="build a policy from an estimate file")
    p.add_argument("--estimate", required=True, help="estimate JSON path")
    _add_common(p, out="required")
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("simulate", help="evaluate a policy file in an environment")
    p.add_argument("--policy", required=True, help="policy JSON path")
    _add_common(p, theta=True, steps=10000, out="optional")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("experiment", help="run the full sweep")
    _add_common(p, theta=True, beta=True, steps=100, out="optional")
    p.add_argument("--demos", type=int, default=10)
    p.add_argument("--eval-steps", type=int, default=10000)
    p.add_argument("--estimators", default="em,gibbs,map,mcmc",
                   help="comma-separated estimator names")
    p.add_argument("--mcmc-sweeps", type=int, default=500)
    p.add_argument("--burn-in", type=int, default=100)
    p.add_argument("--thin", type=int, default=10)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="format a results bundle")
    p.add_argument("--results", required=True, help="results JSON path")
    p.add_argument("--out", default=None, help="table output path")
    p.add_argument("--hist", default=None, help="histogram data output path")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures exit 2
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
