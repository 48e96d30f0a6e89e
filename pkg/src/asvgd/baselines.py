"""Reference samplers: SVGD, ULA, MALA and underdamped Langevin (ULD).

The stochastic samplers run N independent chains, one per particle row.
Noise is drawn as one (N, d) block per step from the sampler's generator,
so particle i always consumes the i-th row of each block.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Literal

import numpy as np

from .ensemble import Ensemble, InitSpec, NumericalAbort, init_ensemble
from .kernels import Gaussian, KernelSpec, kernel_matrix, kernel_repulsion
from .metrics import Hook, RunRecord, StepInfo, run_loop
from .targets import Target

BaselineName = Literal["svgd", "ula", "mala", "uld"]
BASELINES = ("svgd", "ula", "mala", "uld")


@dataclass(frozen=True)
class BaselineConfig:
    tau: float = 0.1
    steps: int = 1000
    kernel: KernelSpec | None = None
    friction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"step size tau must be > 0, got {self.tau}")
        if not self.friction > 0:
            raise ValueError(f"friction must be > 0, got {self.friction}")
        if self.steps < 0:
            raise ValueError(f"step count must be >= 0, got {self.steps}")


def noise_rng(seed: int) -> np.random.Generator:
    # keyed on (seed, 1) so the noise stream never coincides with the
    # initialization stream drawn from default_rng(seed)
    return np.random.default_rng([seed, 1])


def _finite_or_abort(x: np.ndarray, step: int, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise NumericalAbort(step, f"non-finite {what}")
    return x


def svgd_step(X: np.ndarray, kernel: KernelSpec, target: Target, tau: float) -> np.ndarray:
    """X_i += tau/N * sum_j [-K(X_j, X_i) grad f(X_j) + grad_1 K(X_j, X_i)]."""
    n = X.shape[0]
    K = kernel_matrix(kernel, X)
    phi = -(K @ target.gradient(X)) + kernel_repulsion(kernel, X, K)
    return X + (tau / n) * phi


def ula_step(X: np.ndarray, target: Target, tau: float, rng: np.random.Generator) -> np.ndarray:
    xi = rng.standard_normal(X.shape)
    return X - tau * target.gradient(X) + np.sqrt(2 * tau) * xi


def _log_q(a: np.ndarray, b: np.ndarray, grad_b: np.ndarray, tau: float) -> np.ndarray:
    # log density (up to a constant) of proposing a from b
    r = a - b + tau * grad_b
    return -np.sum(r * r, axis=-1) / (4 * tau)


def mala_log_accept(x: np.ndarray, x_prop: np.ndarray, target: Target, tau: float) -> np.ndarray:
    """log of the MH ratio pi(x') q(x | x') / (pi(x) q(x' | x)), before min(0, .)."""
    gx = target.gradient(x)
    gp = target.gradient(x_prop)
    return (
        -target.potential(x_prop)
        + target.potential(x)
        + _log_q(x, x_prop, gp, tau)
        - _log_q(x_prop, x, gx, tau)
    )


def mala_step(
    X: np.ndarray, target: Target, tau: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """One MALA move per chain. Returns the new states and the acceptance mask."""
    xi = rng.standard_normal(X.shape)
    u = rng.random(X.shape[0])
    prop = X - tau * target.gradient(X) + np.sqrt(2 * tau) * xi
    log_alpha = np.minimum(0.0, mala_log_accept(X, prop, target, tau))
    # non-finite proposals are rejected
    accept = np.isfinite(log_alpha) & (np.log(u) < log_alpha) & np.all(np.isfinite(prop), axis=1)
    return np.where(accept[:, None], prop, X), accept


def uld_step(
    X: np.ndarray,
    vel: np.ndarray,
    target: Target,
    tau: float,
    gamma: float,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Euler-Maruyama for dX = V dt, dV = -(grad f(X) + gamma V) dt + sqrt(2 gamma) dB, unit mass."""
    xi = rng.standard_normal(X.shape)
    X_new = X + tau * vel
    vel_new = vel - tau * (target.gradient(X_new) + gamma * vel) + np.sqrt(2 * gamma * tau) * xi
    return X_new, vel_new


def make_stepper(name: BaselineName, config: BaselineConfig, target: Target):
    rng = noise_rng(config.seed)
    tau = config.tau

    def advance(e: Ensemble, X_new: np.ndarray, vel: np.ndarray | None = None, **info) -> tuple[Ensemble, StepInfo]:
        k = e.step_index + 1
        _finite_or_abort(X_new, k, "particle positions")
        fields = dict(positions=X_new, prev_positions=e.positions, step_index=k)
        if vel is not None:
            fields["momenta"] = _finite_or_abort(vel, k, "velocities")
        return replace(e, **fields), StepInfo(step=k, **info)

    if name == "svgd":
        kernel = config.kernel if config.kernel is not None else Gaussian.from_sigma(0.1)
        return lambda e: advance(e, svgd_step(e.positions, kernel, target, tau))
    if name == "ula":
        return lambda e: advance(e, ula_step(e.positions, target, tau, rng))
    if name == "mala":
        def step(e):
            X_new, accepted = mala_step(e.positions, target, tau, rng)
            return advance(e, X_new, acceptance_rate=float(np.mean(accepted)))
        return step
    if name == "uld":
        def step(e):
            X_new, vel = uld_step(e.positions, e.momenta, target, tau, config.friction, rng)
            return advance(e, X_new, vel)
        return step
    raise ValueError(f"unknown baseline sampler {name!r}; choose from {BASELINES}")


def baseline_run(
    name: BaselineName,
    config: BaselineConfig,
    target: Target,
    init: InitSpec | Ensemble,
    hooks: Iterable[Hook] = (),
) -> RunRecord:
    if isinstance(init, InitSpec):
        if init.dim != target.dim:
            raise ValueError(f"initial distribution has d={init.dim}, target has d={target.dim}")
        e = init_ensemble(init)
    else:
        e = init
    return run_loop(e, config.steps, make_stepper(name, config, target), hooks)
