"""Target densities pi ∝ exp(-f) with hand-written gradients.

Potentials and gradients accept a single point of shape ``(d,)`` or a
batch of shape ``(N, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .ensemble import cholesky_or_raise


@dataclass(frozen=True)
class Target:
    name: str
    potential: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    quad_box: tuple[tuple[float, float], ...]
    analytic_log_z: float | None = None

    @property
    def dim(self) -> int:
        return len(self.quad_box)

    def shifted(self, constant: float) -> "Target":
        """Same density with ``f + constant``; log Z shifts by ``-constant``."""
        log_z = None if self.analytic_log_z is None else self.analytic_log_z - constant
        return Target(
            name=f"{self.name}+{constant:g}",
            potential=lambda x: self.potential(x) + constant,
            gradient=self.gradient,
            quad_box=self.quad_box,
            analytic_log_z=log_z,
        )


def gaussian_target(precision, mean, box_halfwidth: float = 8.0, name: str = "gaussian") -> Target:
    """f(x) = 1/2 (x - mean)^T Q (x - mean) for an SPD precision Q."""
    Q = np.atleast_2d(np.asarray(precision, dtype=float))
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    if Q.shape != (mu.shape[0],) * 2:
        raise ValueError(f"precision shape {Q.shape} does not match mean length {mu.shape[0]}")
    chol = cholesky_or_raise(Q, "target precision matrix")
    d = mu.shape[0]
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))

    def potential(x):
        r = np.asarray(x, dtype=float) - mu
        return 0.5 * np.einsum("...i,ij,...j->...", r, Q, r)

    def gradient(x):
        return (np.asarray(x, dtype=float) - mu) @ Q

    box = tuple((float(m - box_halfwidth), float(m + box_halfwidth)) for m in mu)
    return Target(
        name=name,
        potential=potential,
        gradient=gradient,
        quad_box=box,
        analytic_log_z=0.5 * d * np.log(2 * np.pi) - 0.5 * log_det,
    )


def gaussian_target_from_cov(covariance, mean, name: str = "gaussian") -> Target:
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    cholesky_or_raise(cov, "target covariance matrix")
    mu = np.atleast_1d(np.asarray(mean, dtype=float))
    # box must cover several standard deviations along the widest axis
    halfwidth = max(8.0, 8.0 * float(np.sqrt(np.max(np.diag(cov)))))
    return gaussian_target(np.linalg.inv(cov), mu, box_halfwidth=halfwidth, name=name)


def quartic_target() -> Target:
    """f(x, y) = (x^4 + y^4) / 4, convex but with non-Lipschitz gradient."""

    def potential(x):
        x = np.asarray(x, dtype=float)
        return 0.25 * np.sum(x**4, axis=-1)

    def gradient(x):
        return np.asarray(x, dtype=float) ** 3

    return Target("quartic", potential, gradient, ((-4.0, 4.0), (-4.0, 4.0)))


BANANA_PRIOR_SCALE = 1.0
BANANA_NOISE_SCALE = 0.3
BANANA_OBS = float(np.log(30.0))
_LOG_FLOOR = 1e-300


def _banana_forward(x):
    x1, x2 = x[..., 0], x[..., 1]
    g = (1.0 - x1) ** 2 + 100.0 * (x2 - x1**2) ** 2
    dg = np.stack([-2.0 * (1.0 - x1) - 400.0 * x1 * (x2 - x1**2), 200.0 * (x2 - x1**2)], axis=-1)
    return np.maximum(g, _LOG_FLOOR), dg


def double_bananas_target() -> Target:
    """Posterior of a log-Rosenbrock observation under a standard normal prior.

    f(x) = |x|^2 / 2 + (y_obs - log((1 - x1)^2 + 100 (x2 - x1^2)^2))^2 / (2 * 0.3^2)
    with y_obs = log 30. The two modes sit above and below the origin.
    """

    def potential(x):
        x = np.asarray(x, dtype=float)
        g, _ = _banana_forward(x)
        misfit = BANANA_OBS - np.log(g)
        return (
            0.5 * np.sum(x**2, axis=-1) / BANANA_PRIOR_SCALE**2
            + 0.5 * misfit**2 / BANANA_NOISE_SCALE**2
        )

    def gradient(x):
        x = np.asarray(x, dtype=float)
        g, dg = _banana_forward(x)
        misfit = BANANA_OBS - np.log(g)
        coef = -misfit / BANANA_NOISE_SCALE**2 / g
        return x / BANANA_PRIOR_SCALE**2 + coef[..., None] * dg

    return Target("double-bananas", potential, gradient, ((-4.0, 4.0), (-2.0, 10.0)))


def _trapezoid_log_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, np.log(h))
    w[0] = w[-1] = np.log(h / 2)
    return w


def log_normalizer(t: Target, grid_points_per_dim: int = 400) -> float:
    """log of the integral of exp(-f) over the target's quadrature box.

    Uses the trapezoidal rule on a uniform grid, accumulated with
    log-sum-exp. An analytic value, when the target has one, is returned
    as is.
    """
    if t.analytic_log_z is not None:
        return float(t.analytic_log_z)
    if t.dim != 2:
        raise ValueError(f"numerical normalization is only supported in 2D, target has d={t.dim}")
    if grid_points_per_dim < 16:
        raise ValueError(f"grid too coarse: {grid_points_per_dim} points per dimension, need >= 16")
    (a0, b0), (a1, b1) = t.quad_box
    g0 = np.linspace(a0, b0, grid_points_per_dim)
    g1 = np.linspace(a1, b1, grid_points_per_dim)
    w0 = _trapezoid_log_weights(grid_points_per_dim, g0[1] - g0[0])
    w1 = _trapezoid_log_weights(grid_points_per_dim, g1[1] - g1[0])
    X0, X1 = np.meshgrid(g0, g1, indexing="ij")
    pts = np.stack([X0, X1], axis=-1)
    log_terms = -t.potential(pts) + w0[:, None] + w1[None, :]
    return float(logsumexp(log_terms))


TARGET_NAMES = ("gaussian", "quartic", "double-bananas")
