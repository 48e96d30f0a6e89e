"""Accelerated Stein variational gradient descent (ASVGD).

One iteration, for positions X, momenta Y and density momenta V:

1. ``X <- X + sqrt(tau) Y``
2. kernel matrix K at the new positions, ``V <- N (K + eps I)^-1 Y``
3. per-particle speed restart, then (Gaussian kernel only) an
   ensemble-wide gradient restart; damping ``alpha = (c - 1) / (c + 2)``
   from the restart counters, or a constant ``beta``
4. kernel-specific momentum update

The eps shift only enters the solve in step 2; the momentum update drops
the eps terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Literal

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .ensemble import Ensemble, InitSpec, NumericalAbort, init_ensemble
from .kernels import Bilinear, Gaussian, KernelSpec, kernel_matrix
from .metrics import Hook, RunRecord, StepInfo, run_loop
from .targets import Target

SOLVE_RTOL = 1e-8


@dataclass(frozen=True)
class AdaptiveRestart:
    pass


@dataclass(frozen=True)
class Constant:
    beta: float

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError(f"constant damping beta must lie in (0, 1), got {self.beta}")


Damping = AdaptiveRestart | Constant


@dataclass(frozen=True)
class AsvgdConfig:
    tau: float = 0.1
    eps: float = 0.1
    kernel: KernelSpec = field(default_factory=lambda: Gaussian.from_sigma(0.1))
    damping: Damping = field(default_factory=AdaptiveRestart)
    steps: int = 1000
    # bilinear kernel only, see momentum_step_bilinear / bilinear_kinetic
    bilinear_interaction: Literal["hamiltonian", "trace"] = "hamiltonian"
    # trace form only: "mixed" uses tr(V_new^T K V_old), "current" tr(V_new^T K V_new)
    bilinear_trace_lag: Literal["mixed", "current"] = "mixed"
    # Gaussian kernel only, see energy_rate / momentum_step_gaussian
    gradient_restart: Literal["energy", "trace", "off"] = "energy"
    gaussian_interaction: Literal["full", "half"] = "full"

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"step size tau must be > 0, got {self.tau}")
        if not self.eps >= 0:
            raise ValueError(f"regularization eps must be >= 0, got {self.eps}")
        if self.steps < 0:
            raise ValueError(f"step count must be >= 0, got {self.steps}")
        if self.bilinear_interaction not in ("hamiltonian", "trace"):
            raise ValueError(f"bilinear_interaction must be 'hamiltonian' or 'trace', got {self.bilinear_interaction!r}")
        if self.bilinear_trace_lag not in ("mixed", "current"):
            raise ValueError(f"bilinear_trace_lag must be 'mixed' or 'current', got {self.bilinear_trace_lag!r}")
        if self.gradient_restart not in ("energy", "trace", "off"):
            raise ValueError(f"gradient_restart must be 'energy', 'trace' or 'off', got {self.gradient_restart!r}")
        if self.gaussian_interaction not in ("full", "half"):
            raise ValueError(f"gaussian_interaction must be 'full' or 'half', got {self.gaussian_interaction!r}")


def position_step(e: Ensemble, tau: float) -> Ensemble:
    new = e.positions + np.sqrt(tau) * e.momenta
    if not np.all(np.isfinite(new)):
        raise NumericalAbort(e.step_index + 1, "non-finite particle positions")
    return replace(e, positions=new, prev_positions=e.positions)


def density_momentum_update(e: Ensemble, K: np.ndarray, eps: float) -> np.ndarray:
    """Solve ``(K + eps I) V = N Y`` by Cholesky."""
    n = e.n
    rhs = n * e.momenta
    system = K + eps * np.eye(n)
    try:
        factor = cho_factor(system, lower=True, check_finite=True)
    except (LinAlgError, ValueError):
        hint = " (eps = 0 with coincident particles; use eps > 0)" if eps == 0 else ""
        raise NumericalAbort(e.step_index, f"kernel system K + eps I is not positive definite{hint}") from None
    return cho_solve(factor, rhs)


def solve_residual(K: np.ndarray, eps: float, V: np.ndarray, Y: np.ndarray) -> float:
    """Relative residual ||(K + eps I) V - N Y||_F / max(1, ||N Y||_F)."""
    n = K.shape[0]
    rhs = n * Y
    r = K @ V + eps * V - rhs
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(rhs)))


def speed_restart(x_new: np.ndarray, x_cur: np.ndarray, x_prev: np.ndarray, counts: np.ndarray) -> np.ndarray:
    slower = np.linalg.norm(x_new - x_cur, axis=1) < np.linalg.norm(x_cur - x_prev, axis=1)
    return np.where(slower, 1, counts + 1)


def gradient_restart_stat(
    K: np.ndarray, V: np.ndarray, grad_f: np.ndarray, X: np.ndarray, x_scale: float = 1.0
) -> float:
    """tr(V^T (K grad_f + x_scale (K - diag(K 1)) X)).

    Equals sum_ij K_ij <V_j, grad f(X_i) + x_scale (X_i - X_j)>.
    """
    inner = K @ grad_f + x_scale * (K @ X - K.sum(axis=1)[:, None] * X)
    return float(np.sum(V * inner))


def energy_rate(K: np.ndarray, V: np.ndarray, grad_f: np.ndarray, X: np.ndarray, sigma2: float) -> float:
    """d/dt KL(rho || pi) along the Gaussian-kernel velocity field Y = K V / N.

    Positive means the particles are currently climbing the energy.
    """
    n = X.shape[0]
    return gradient_restart_stat(K, V, grad_f, X, 1.0 / sigma2) / n**2


def gradient_restart_triggered(
    mode: str, K: np.ndarray, V: np.ndarray, grad_f: np.ndarray, X: np.ndarray, sigma2: float
) -> bool:
    if mode == "energy":
        return energy_rate(K, V, grad_f, X, sigma2) > 0
    if mode == "trace":
        return gradient_restart_stat(K, V, grad_f, X) < 0
    return False


def damping_values(counts: np.ndarray, mode: Damping) -> np.ndarray:
    counts = np.asarray(counts)
    if isinstance(mode, Constant):
        return np.full(counts.shape, mode.beta, dtype=float)
    return (counts - 1.0) / (counts + 2.0)


def momentum_step_bilinear(
    Y: np.ndarray,
    X: np.ndarray,
    K: np.ndarray,
    grad_f: np.ndarray,
    V_new: np.ndarray,
    V_old: np.ndarray,
    A: np.ndarray,
    tau: float,
    alpha: np.ndarray,
) -> np.ndarray:
    n = X.shape[0]
    rt = np.sqrt(tau)
    trace = float(np.sum(V_new * (K @ V_old)))
    return alpha[:, None] * Y - (rt / n) * (K @ grad_f) + rt * (1.0 + trace / n**2) * (X @ A)


def bilinear_kinetic(Y: np.ndarray, X: np.ndarray, K: np.ndarray, V: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Time derivative of the momenta K P under the kinetic Hamiltonian, P = V / N.

    With H = 1/2 sum_ij K(X_i, X_j) <P_i, P_j> and Y = K P, differentiating
    Y along dX/dt = Y, dP/dt = -dH/dX gives

        Y A X^T P + X A (P^T K P) - K P P^T X A.

    Contracting the d x d matrix P^T K P to its trace recovers the scalar
    factor used by ``momentum_step_bilinear``. The two agree only for d = 1.
    """
    P = V / X.shape[0]
    return Y @ A @ (X.T @ P) + X @ A @ (P.T @ K @ P) - K @ P @ (P.T @ X) @ A


def momentum_step_bilinear_hamiltonian(
    Y: np.ndarray,
    X: np.ndarray,
    K: np.ndarray,
    grad_f: np.ndarray,
    V: np.ndarray,
    A: np.ndarray,
    tau: float,
    alpha: np.ndarray,
) -> np.ndarray:
    n = X.shape[0]
    rt = np.sqrt(tau)
    force = -(K @ grad_f) / n + X @ A
    return alpha[:, None] * Y + rt * (force + bilinear_kinetic(Y, X, K, V, A))


def gaussian_interaction_weights(K: np.ndarray, V: np.ndarray) -> np.ndarray:
    """W = N K + (K V V^T) o K - K o (K V V^T), with o the entrywise product."""
    n = K.shape[0]
    KP = (K @ V) @ V.T
    return n * K + KP * K - K * KP


def momentum_step_gaussian(
    Y: np.ndarray,
    X: np.ndarray,
    K: np.ndarray,
    grad_f: np.ndarray,
    V_new: np.ndarray,
    sigma2: float,
    tau: float,
    alpha: np.ndarray,
    interaction: str = "full",
) -> np.ndarray:
    """Momentum update for the Gaussian kernel.

    ``interaction="half"`` scales the (diag(W 1) - W) X term by
    sqrt(tau) / (2 N^2 sigma2). At V = 0 that is half the SVGD repulsion,
    which makes the particles settle on a density proportional to pi^2.
    ``"full"`` uses sqrt(tau) / (N^2 sigma2), the coefficient obtained
    from differentiating Y_i = (1/N) sum_j K(X_i, X_j) V_j in time, and
    the one that matches the bilinear update.
    """
    n = X.shape[0]
    rt = np.sqrt(tau)
    W = gaussian_interaction_weights(K, V_new)
    laplacian_x = W.sum(axis=1)[:, None] * X - W @ X
    scale = rt / (2.0 * n**2 * sigma2) if interaction == "half" else rt / (n**2 * sigma2)
    return alpha[:, None] * Y - (rt / n) * (K @ grad_f) + scale * laplacian_x


def asvgd_step(e: Ensemble, config: AsvgdConfig, target: Target) -> tuple[Ensemble, StepInfo]:
    k = e.step_index + 1
    moved = position_step(e, config.tau)
    X = moved.positions
    K = kernel_matrix(config.kernel, X)
    V_new = density_momentum_update(e, K, config.eps)
    residual = solve_residual(K, config.eps, V_new, e.momenta)
    if not residual <= SOLVE_RTOL:
        raise NumericalAbort(k, f"density-momentum solve residual {residual:.3e} exceeds {SOLVE_RTOL:g}")
    grad_f = target.gradient(X)

    counts = e.restart_counts
    grad_restart = False
    if isinstance(config.damping, AdaptiveRestart):
        counts = speed_restart(X, e.positions, e.prev_positions, counts)
        if isinstance(config.kernel, Gaussian) and gradient_restart_triggered(
            config.gradient_restart, K, V_new, grad_f, X, config.kernel.sigma2
        ):
            counts = np.ones_like(counts)
            grad_restart = True
    alpha = damping_values(counts, config.damping)

    if isinstance(config.kernel, Bilinear) and config.bilinear_interaction == "hamiltonian":
        Y_new = momentum_step_bilinear_hamiltonian(e.momenta, X, K, grad_f, V_new, config.kernel.A, config.tau, alpha)
    elif isinstance(config.kernel, Bilinear):
        V_lag = e.density_momenta if config.bilinear_trace_lag == "mixed" else V_new
        Y_new = momentum_step_bilinear(e.momenta, X, K, grad_f, V_new, V_lag, config.kernel.A, config.tau, alpha)
    else:
        Y_new = momentum_step_gaussian(
            e.momenta, X, K, grad_f, V_new, config.kernel.sigma2, config.tau, alpha, config.gaussian_interaction
        )
    if not (np.all(np.isfinite(Y_new)) and np.all(np.isfinite(V_new))):
        raise NumericalAbort(k, "non-finite momenta")

    restarted = counts == 1 if isinstance(config.damping, AdaptiveRestart) else np.zeros(e.n, dtype=bool)
    new = replace(
        moved,
        momenta=Y_new,
        density_momenta=V_new,
        restart_counts=counts,
        step_index=k,
    )
    info = StepInfo(
        step=k,
        restart_fraction=float(np.mean(restarted)),
        alpha_mean=float(np.mean(alpha)),
        solve_residual=residual,
        gradient_restart=grad_restart,
    )
    return new, info


def check_compatible(kernel: KernelSpec, target: Target, init: InitSpec) -> None:
    if init.dim != target.dim:
        raise ValueError(f"initial distribution has d={init.dim}, target has d={target.dim}")
    if kernel.dim is not None and kernel.dim != target.dim:
        raise ValueError(f"kernel has d={kernel.dim}, target has d={target.dim}")


def asvgd_run(
    config: AsvgdConfig,
    target: Target,
    init: InitSpec | Ensemble,
    hooks: Iterable[Hook] = (),
) -> RunRecord:
    if isinstance(init, InitSpec):
        check_compatible(config.kernel, target, init)
        e = init_ensemble(init)
    else:
        e = init
    return run_loop(e, config.steps, lambda ens: asvgd_step(ens, config, target), hooks)
