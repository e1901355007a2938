"""Certified and statistical reachability analysis for infinite Markov chains.

Numerical frontier exploration and Monte Carlo sampling, both optionally
driven through a random-walk abstraction that biases the chain towards the
target (importance sampling).  Models are built-in chains or probabilistic
pushdown automata read from a small text format.
"""

from ._accel import BACKEND, COMPILED
from .abstraction import SINK, BiasedChain, RandomWalkAbs, decreasing_ratio, likelihood_reward, rw_reach_prob
from .chain import Distribution, Label, MarkovModel, RewardFn, TargetSpec, constant_reward, product_reward
from .errors import (AbstractionError, ConfigurationError, DecmcError, DomainError, InternalError, ModelError,
                     NotFoundError, ParseError, PathError, SpecificationError)
from .models import Fig1Chain, IrrationalChain, builtin_model
from .numeric import CertifiedInterval, evaluate, evaluate_importance, evaluate_reward
from .ppda import PpdaModel, check_divergence, load_bundled, load_model, min_n0_for_p, parse_model
from .records import RunRecord
from .smc import ConfidenceInterval, SmcConfig, estimate, estimate_importance, sample_count

__version__ = "0.1.0"

__all__ = [
    "AbstractionError", "BACKEND", "BiasedChain", "COMPILED", "CertifiedInterval", "ConfidenceInterval",
    "ConfigurationError", "DecmcError", "Distribution", "DomainError", "Fig1Chain", "InternalError",
    "IrrationalChain", "Label", "MarkovModel", "ModelError", "NotFoundError", "ParseError", "PathError",
    "PpdaModel", "RandomWalkAbs", "RewardFn", "RunRecord", "SINK", "SmcConfig", "SpecificationError",
    "TargetSpec", "builtin_model", "check_divergence", "constant_reward", "decreasing_ratio", "estimate",
    "estimate_importance", "evaluate", "evaluate_importance", "evaluate_reward", "likelihood_reward",
    "load_bundled", "load_model", "min_n0_for_p", "parse_model", "product_reward", "rw_reach_prob",
    "sample_count",
]
