"""Degree, mixing, and latent-profile estimation from aggregated
relational data ("how many X do you know?" counts).

Two estimation routes share the same data model: a Gibbs-Metropolis
sampler for the full hierarchical count model (`mcmc.run`) and a
closed-form pipeline of scale-up degrees, ratio or EM mixing rows, and
nonnegative least squares for latent profile columns (`estimators`).
`simulate` generates synthetic surveys under four known-profile
selection regimes and `study` replays the regime-comparison experiment.
"""

from .diagnostics import ess, split_rhat
from .estimators import (EmMixingResult, LatentProfileResult,
                         ScaledDownReport, bootstrap_latent_se,
                         check_scaled_down, em_mixing,
                         estimate_latent_profiles, group_mixing,
                         group_scale_up_degree, scale_up_degree,
                         simple_ratio_mixing)
from .io import (LATENT_TOKEN, ProjectConfig, load_draws, load_margins,
                 load_profiles, load_responses, write_results)
from .kernels import (RankReport, mean_ties, negbin_logpmf, negbin_sample,
                      scaled_inv_chi2, validate_identifiability)
from .mcmc import (MIXING_PROPOSALS, MODES, PosteriorDraws, SamplerConfig,
                   SamplerState, initial_state, log_posterior, run,
                   step_degree, step_hyperparams, step_latent_profile,
                   step_mixing_row, step_overdispersion)
from .nnls import NnlsIterationError, NnlsResult, kkt_gap, nnls_solve
from .simulate import (REGIMES, SimConfig, default_degree_law,
                       default_margins, default_mixing,
                       latent_truth_profiles, make_regime_profiles,
                       regime_margins, simulate, simulate_complete)
from .study import (StudyConfig, StudyResult, run_study, summary_table,
                    write_study)
from .types import (ArdDataset, IdentifiabilityError, MixingMatrix,
                    ModelParams, PopulationMargins, ProfileMatrix,
                    ValidationError, check_alignment)

__version__ = "0.1.0"

__all__ = [
    "ArdDataset", "EmMixingResult", "IdentifiabilityError", "LATENT_TOKEN",
    "LatentProfileResult", "MIXING_PROPOSALS", "MODES", "MixingMatrix",
    "ModelParams", "NnlsIterationError", "NnlsResult", "PopulationMargins",
    "PosteriorDraws", "ProfileMatrix", "ProjectConfig", "REGIMES", "RankReport",
    "SamplerConfig", "SamplerState", "ScaledDownReport", "SimConfig",
    "StudyConfig", "StudyResult", "ValidationError", "bootstrap_latent_se",
    "check_alignment", "check_scaled_down", "default_degree_law",
    "default_margins", "default_mixing", "em_mixing", "ess",
    "estimate_latent_profiles", "group_mixing", "group_scale_up_degree",
    "initial_state", "kkt_gap", "latent_truth_profiles", "load_draws",
    "load_margins", "load_profiles", "load_responses", "log_posterior",
    "make_regime_profiles", "mean_ties", "negbin_logpmf", "negbin_sample",
    "nnls_solve", "regime_margins", "run", "run_study", "scale_up_degree",
    "scaled_inv_chi2", "simple_ratio_mixing", "simulate",
    "simulate_complete", "split_rhat", "step_degree", "step_hyperparams",
    "step_latent_profile", "step_mixing_row", "step_overdispersion",
    "summary_table", "validate_identifiability", "write_results",
    "write_study",
]
