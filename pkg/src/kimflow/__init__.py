"""Probability-flow transport maps and their Fisher-information stability bounds."""

from .bounds import (ProfileParams, QuadratureSpec, eta_inf, eta_T, lambda_inf, lambda_limit,
                     lambda_T, lhat, lsi_constant, theta_integral)
from .errors import (ConfigError, ConstructionError, DomainError, IntegrationDiverged,
                     KimflowError, QuadratureError, RefusedExperiment, UnsupportedOperation)
from .fisher import fi, fi_decay_curve, fi_gaussian_closed, fi_inf, kl_gaussian, w2_gaussian
from .flow import FlowConfig, coupled_distance, flow_map_batch, integrate
from .measures import (Gaussian, GaussianMixture, PerturbedSLC, SamplerSeed,
                       mixture_lipschitz_bound, sample, standard_gaussian)
from .ou import EvolvedMeasure, ThetaProfile, evolved_score, ou_evolve, theta

__version__ = "0.1.0"

__all__ = [
    "ProfileParams", "QuadratureSpec", "eta_inf", "eta_T", "lambda_inf", "lambda_limit",
    "lambda_T", "lhat", "lsi_constant", "theta_integral", "ConfigError", "ConstructionError",
    "DomainError", "IntegrationDiverged", "KimflowError", "QuadratureError", "RefusedExperiment",
    "UnsupportedOperation", "fi", "fi_decay_curve", "fi_gaussian_closed", "fi_inf", "kl_gaussian",
    "w2_gaussian", "FlowConfig", "coupled_distance", "flow_map_batch", "integrate", "Gaussian",
    "GaussianMixture", "PerturbedSLC", "SamplerSeed", "mixture_lipschitz_bound", "sample",
    "standard_gaussian", "EvolvedMeasure", "ThetaProfile", "evolved_score", "ou_evolve", "theta",
]
