"""Bayesian inference for a generalized shared frailty model.

Recurrence- and treatment-stratum-specific baseline survival functions get a
truncated stick-breaking mixture prior with shared weights and
stratum-selected atoms; inference runs through a self-contained No-U-Turn
sampler on an automatically differentiated unconstrained posterior.
"""

__version__ = "0.1.0"

from .data import Dataset, Observation, load_bladder, load_csv, prepare_bladder, validate
from .ddp import AtomSet, DesignMatrix, design_one_way, design_two_way, stick_break
from .diagnostics import ess, mcmc_pace, split_rhat, summarize
from .fit import FitResult, fit_gsfm, fit_pooled
from .km import km_fit
from .model import Hyperparams, Parameters, build_target, pooled_mode
from .sampler import ChainOutput, NutsConfig, multi_chain, nuts_run
from .simgen import ScenarioConfig, gen_dataset, paper_scenario, replicate_study

__all__ = [
    "__version__",
    "AtomSet",
    "ChainOutput",
    "Dataset",
    "DesignMatrix",
    "FitResult",
    "Hyperparams",
    "NutsConfig",
    "Observation",
    "Parameters",
    "ScenarioConfig",
    "build_target",
    "design_one_way",
    "design_two_way",
    "ess",
    "fit_gsfm",
    "fit_pooled",
    "gen_dataset",
    "km_fit",
    "load_bladder",
    "load_csv",
    "mcmc_pace",
    "multi_chain",
    "nuts_run",
    "paper_scenario",
    "pooled_mode",
    "prepare_bladder",
    "replicate_study",
    "split_rhat",
    "stick_break",
    "summarize",
    "validate",
]
