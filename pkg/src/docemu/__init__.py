"""Gaussian-process emulation of Bayesian trial operating characteristics."""
__version__ = "0.1.0"

from ._validation import ConditioningError, DegeneracyError, SolverError
from .design import CentroidDesign, Design, ParamPoint, grid_design, kmeans_centroids
from .doc import (DOCEstimate, SimStudyConfig, beta_exceedance, doc_estimate, mc_power,
                  run_sim_study, sim_metrics)
from .emulator import BetaGPEmulator, GaussianProcessSurface, fit_beta, gp_predict, gp_train
from .scmc import ConstraintSpec, WeightedCloud, ess, next_tau, run_scmc
from .trial_models import (BinaryPrior, OrdinalPrior, TrialConfig, binary_posterior_pi,
                           po_posterior_pi, sampling_distribution, simulate_binary_trial,
                           simulate_ordinal_trial)

__all__ = [
    "BetaGPEmulator", "BinaryPrior", "CentroidDesign", "ConditioningError", "ConstraintSpec",
    "DOCEstimate", "DegeneracyError", "Design", "GaussianProcessSurface", "OrdinalPrior",
    "ParamPoint", "SimStudyConfig", "SolverError", "TrialConfig", "WeightedCloud",
    "beta_exceedance", "binary_posterior_pi", "doc_estimate", "ess", "fit_beta",
    "gp_predict", "gp_train", "grid_design", "kmeans_centroids", "mc_power", "next_tau",
    "po_posterior_pi", "run_scmc", "run_sim_study", "sampling_distribution", "sim_metrics",
    "simulate_binary_trial", "simulate_ordinal_trial",
]
