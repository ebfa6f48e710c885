"""Phaseless AFQMC with multi-determinant trial wavefunctions."""

from .propagation import (Propagator, Walker, WalkerEnsemble, build_propagator, force_bias,
                          local_energy, one_rdm, reorthonormalize, step_walkers, trial_overlap)
from .run import (AFQMCConfig, BlockingResult, EnergyTrace, blocking_analysis, canonical_trial,
                  population_control, run_afqmc)
from .trial import TrialAlgebra

__all__ = [
    "AFQMCConfig", "BlockingResult", "EnergyTrace", "Propagator", "TrialAlgebra", "Walker",
    "WalkerEnsemble", "blocking_analysis", "build_propagator", "canonical_trial", "force_bias",
    "local_energy", "one_rdm", "population_control", "reorthonormalize", "run_afqmc",
    "step_walkers", "trial_overlap",
]
