"""KL-divergence diagnostics and per-step run records.

The KL estimate is a plug-in estimator: a Gaussian KDE of the particle
cloud, evaluated at the particles themselves, against the normalized
target log-density. The same bandwidth rule is applied to every sampler
so curves are comparable across samplers, not in absolute terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.special import logsumexp

from .ensemble import Ensemble, sample_mean_cov, warn_degenerate
from .kernels import pairwise_sq_dists
from .targets import Target

BANDWIDTH_FLOOR = 1e-6


@dataclass(frozen=True)
class StepRecord:
    step: int
    kl_estimate: float
    mean: np.ndarray
    cov_trace: float
    restart_fraction: float
    alpha_mean: float


@dataclass(frozen=True)
class StepInfo:
    """What a single sampler step reports besides the new ensemble."""

    step: int
    restart_fraction: float = 0.0
    alpha_mean: float = 0.0
    solve_residual: float | None = None
    gradient_restart: bool = False
    acceptance_rate: float | None = None


@dataclass
class RunRecord:
    final: Ensemble
    records: list[StepRecord] = field(default_factory=list)
    infos: list[StepInfo] = field(default_factory=list)


Hook = Callable[[Ensemble, "StepInfo | None"], None]


def silverman_bandwidth(particles: np.ndarray) -> float:
    """Silverman's rule with the mean per-coordinate standard deviation."""
    x = np.atleast_2d(np.asarray(particles, dtype=float))
    n, d = x.shape
    if n < 2:
        raise ValueError("Silverman bandwidth needs at least 2 particles")
    spread = float(np.mean(np.std(x, axis=0, ddof=1)))
    h = spread * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
    if not h > BANDWIDTH_FLOOR:
        warn_degenerate(f"degenerate particle cloud, bandwidth floored at {BANDWIDTH_FLOOR}")
        return BANDWIDTH_FLOOR
    return h


def kde_log_density(particles: np.ndarray, bandwidth: float, query: np.ndarray) -> np.ndarray | float:
    """log of (1/N) sum_i N(query; X_i, h^2 I). ``query`` may be a batch."""
    if not bandwidth > 0:
        raise ValueError(f"KDE bandwidth must be > 0, got {bandwidth}")
    x = np.atleast_2d(np.asarray(particles, dtype=float))
    q = np.asarray(query, dtype=float)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    n, d = x.shape
    diff = q[:, None, :] - x[None, :, :]
    sq = np.einsum("qnk,qnk->qn", diff, diff)
    log_norm = -0.5 * d * np.log(2 * np.pi * bandwidth**2) - np.log(n)
    out = logsumexp(-sq / (2 * bandwidth**2), axis=1) + log_norm
    return float(out[0]) if single else out


def kl_estimate(particles: np.ndarray, target: Target, bandwidth: float, log_z: float) -> float:
    x = np.atleast_2d(np.asarray(particles, dtype=float))
    n, d = x.shape
    if not bandwidth > 0:
        raise ValueError(f"KDE bandwidth must be > 0, got {bandwidth}")
    # query set equals the particle set, so reuse the pairwise distances
    log_norm = -0.5 * d * np.log(2 * np.pi * bandwidth**2) - np.log(n)
    log_rho = logsumexp(-pairwise_sq_dists(x) / (2 * bandwidth**2), axis=1) + log_norm
    log_pi = -target.potential(x) - log_z
    return float(np.mean(log_rho - log_pi))


def make_record(e: Ensemble, target: Target, log_z: float, info: StepInfo | None) -> StepRecord:
    moments = sample_mean_cov(e)
    kl = kl_estimate(e.positions, target, silverman_bandwidth(e.positions), log_z) if e.n >= 2 else float("nan")
    return StepRecord(
        step=e.step_index,
        kl_estimate=kl,
        mean=moments.mean,
        cov_trace=float(np.trace(moments.cov)),
        restart_fraction=0.0 if info is None else info.restart_fraction,
        alpha_mean=0.0 if info is None else info.alpha_mean,
    )


class MetricRecorder:
    """Hook that appends a StepRecord every ``every`` steps (and at step 0)."""

    def __init__(self, target: Target, log_z: float, every: int = 10, final_step: int | None = None):
        if every < 1:
            raise ValueError("metric cadence must be a positive integer")
        self.target = target
        self.log_z = log_z
        self.every = every
        self.final_step = final_step
        self.records: list[StepRecord] = []

    def __call__(self, e: Ensemble, info: StepInfo | None) -> None:
        k = e.step_index
        if k % self.every == 0 or k == self.final_step:
            self.records.append(make_record(e, self.target, self.log_z, info))


def run_loop(
    e: Ensemble,
    steps: int,
    step_fn: Callable[[Ensemble], tuple[Ensemble, StepInfo]],
    hooks: Iterable[Hook] = (),
) -> RunRecord:
    """Apply ``step_fn`` ``steps`` times, calling every hook after each step.

    Hooks also see the initial ensemble with ``info=None``.
    """
    hooks = list(hooks)
    record = RunRecord(final=e)
    for hook in hooks:
        hook(e, None)
    for _ in range(steps):
        e, info = step_fn(e)
        record.infos.append(info)
        for hook in hooks:
            hook(e, info)
    record.final = e
    for hook in hooks:
        if isinstance(hook, MetricRecorder):
            record.records.extend(hook.records)
    return record
