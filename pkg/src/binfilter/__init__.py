"""Optimal coupling updates of binary ensembles under a hidden Markov chain model."""

from .chain import (
    BinaryMarkovChain,
    GaussianNodeLikelihood,
    marginals,
    posterior_chain,
    sample_chains,
)
from .cpl import CplFunction, eval_cpl
from .ensemble import (
    Ensemble,
    EstimationPrior,
    estimate_chain,
    resample_assumed,
    update_member,
    update_members,
)
from .metrics import contact_length_cdf, contact_probability, frobenius_diff, quantile_interval
from .optimizer import TransitionRule, build_optimal_q
from .truth import ProcessConfig, TrueModelTable, cond_prob_one, simulate_observation, simulate_step

__all__ = [
    "BinaryMarkovChain",
    "CplFunction",
    "Ensemble",
    "EstimationPrior",
    "GaussianNodeLikelihood",
    "ProcessConfig",
    "TransitionRule",
    "TrueModelTable",
    "build_optimal_q",
    "cond_prob_one",
    "contact_length_cdf",
    "contact_probability",
    "estimate_chain",
    "eval_cpl",
    "frobenius_diff",
    "marginals",
    "posterior_chain",
    "quantile_interval",
    "resample_assumed",
    "sample_chains",
    "simulate_observation",
    "simulate_step",
    "update_member",
    "update_members",
]
