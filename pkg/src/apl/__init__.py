"""Apprenticeship learning of POMDP model parameters from expert demonstrations.

Expert behavior is modeled as a soft-max policy over optimal action values,
so a demonstration carries two kinds of evidence about uncertain model
parameters: the environment's observed responses and the expert's action
choices.  This package estimates the parameter posterior from both (MAP
search and a Metropolis-within-Gibbs sampler), provides the response-only
IO-HMM baselines (EM and Gibbs), plans over sampled posteriors via a
hidden-model-index state extension, and ships an experiment harness with a
CLI around the Bayesian tiger task.
"""

from .errors import (
    AplError,
    EpisodicTemplate,
    ImpossibleTrace,
    InvalidModel,
    NoFeasibleStart,
    OutOfSupport,
    ParseError,
    UnsupportedParameterRole,
    ZeroProbabilityObservation,
)
from .pomdp_core import (
    AlphaVector,
    BeliefUpdate,
    DemoTrace,
    ModelPolicy,
    PolicyConfig,
    Pomdp,
    ValueFunction,
    action_values,
    action_values_batch,
    belief_update,
    format_trace,
    generate_demo,
    greedy_action,
    parse_trace,
    read_trace,
    simulate,
    softmax_policy,
    validate_pomdp,
    value,
    write_trace,
)
from .solver import SolverConfig, blind_policy_alpha, point_backup, solve
from .model_family import (
    BetaPrior,
    NormalPrior,
    ParamExpr,
    ParametricTemplate,
    instantiate,
    load_template,
    log_prior,
    sample_prior,
    save_template,
    template_from_dict,
    template_to_dict,
    tiger_template,
    validate_template,
)
from .likelihood import (
    StateSequence,
    action_loglik,
    ffbs,
    log_posterior,
    obs_loglik,
    smoothed_marginals,
)
from .estimators import (
    EmConfig,
    MapConfig,
    McmcConfig,
    SampleSet,
    conditional_draw,
    iohmm_em,
    iohmm_gibbs,
    map_estimate,
    mcmc_posterior,
    metropolis_accept,
)
from .planning import ExtendedPomdp, PosteriorPolicy, extend, plan_posterior
from .harness import (
    ExperimentConfig,
    ResultsBundle,
    RunRecord,
    derive_seed,
    read_trace_file,
    report,
    run_experiment,
    write_trace_file,
)

__version__ = "0.1.0"

__all__ = [
    "AplError", "EpisodicTemplate", "ImpossibleTrace", "InvalidModel",
    "NoFeasibleStart", "OutOfSupport", "ParseError", "UnsupportedParameterRole",
    "ZeroProbabilityObservation",
    "AlphaVector", "BeliefUpdate", "DemoTrace", "ModelPolicy", "PolicyConfig",
    "Pomdp", "ValueFunction", "action_values", "action_values_batch",
    "belief_update", "format_trace", "generate_demo", "greedy_action",
    "parse_trace", "read_trace", "simulate", "softmax_policy", "validate_pomdp",
    "value", "write_trace",
    "SolverConfig", "blind_policy_alpha", "point_backup", "solve",
    "BetaPrior", "NormalPrior", "ParamExpr", "ParametricTemplate", "instantiate",
    "load_template", "log_prior", "sample_prior", "save_template",
    "template_from_dict", "template_to_dict", "tiger_template", "validate_template",
    "StateSequence", "action_loglik", "ffbs", "log_posterior", "obs_loglik",
    "smoothed_marginals",
    "EmConfig", "MapConfig", "McmcConfig", "SampleSet", "conditional_draw",
    "iohmm_em", "iohmm_gibbs", "map_estimate", "mcmc_posterior", "metropolis_accept",
    "ExtendedPomdp", "PosteriorPolicy", "extend", "plan_posterior",
    "ExperimentConfig", "ResultsBundle", "RunRecord", "derive_seed",
    "read_trace_file", "report", "run_experiment", "write_trace_file",
]
