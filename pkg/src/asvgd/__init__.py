"""Accelerated Stein variational gradient descent and baseline particle samplers."""

from .accelerated import AdaptiveRestart, AsvgdConfig, Constant, asvgd_run, asvgd_step
from .baselines import BaselineConfig, baseline_run
from .ensemble import Ensemble, InitSpec, NumericalAbort, init_ensemble, sample_mean_cov
from .kernels import Bilinear, Gaussian, kernel_eval, kernel_grad1, kernel_matrix
from .metrics import RunRecord, StepRecord, kl_estimate, silverman_bandwidth
from .targets import Target, double_bananas_target, gaussian_target, log_normalizer, quartic_target

__all__ = [
    "AdaptiveRestart", "AsvgdConfig", "BaselineConfig", "Bilinear", "Constant", "Ensemble",
    "Gaussian", "InitSpec", "NumericalAbort", "RunRecord", "StepRecord", "Target",
    "asvgd_run", "asvgd_step", "baseline_run", "double_bananas_target", "gaussian_target",
    "init_ensemble", "kernel_eval", "kernel_grad1", "kernel_matrix", "kl_estimate",
    "log_normalizer", "quartic_target", "sample_mean_cov", "silverman_bandwidth",
]
