"""Particle-system state shared by every sampler.

Matrices are stored N x d with one particle per row, so an N x N kernel
matrix multiplies from the left and a d x d matrix from the right.

Random streams come from ``numpy.random.default_rng(seed)`` (PCG64). The
seed -> stream mapping is therefore the one numpy guarantees stable for
``Generator.standard_normal`` with float64 output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np


class DegenerateSampleWarning(UserWarning):
    pass


class NumericalAbort(RuntimeError):
    """A sampler produced non-finite state or a failed linear solve."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class InitSpec:
    mean: np.ndarray
    covariance: np.ndarray
    count: int
    seed: int = 0

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        d = mean.shape[0]
        if mean.ndim != 1:
            raise ValueError(f"init mean must be a vector, got shape {mean.shape}")
        if cov.shape != (d, d):
            raise ValueError(f"init covariance must be {d}x{d}, got {cov.shape}")
        if int(self.count) < 1:
            raise ValueError(f"particle count must be >= 1, got {self.count}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "count", int(self.count))
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class Ensemble:
    positions: np.ndarray
    momenta: np.ndarray
    density_momenta: np.ndarray
    prev_positions: np.ndarray
    restart_counts: np.ndarray
    step_index: int = 0

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def check(self) -> None:
        """Raise ``ValueError`` if any structural invariant is violated."""
        shape = self.positions.shape
        if len(shape) != 2 or shape[0] < 1 or shape[1] < 1:
            raise ValueError(f"positions must be N x d with N, d >= 1, got {shape}")
        for name in ("momenta", "density_momenta", "prev_positions"):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if self.restart_counts.shape != (shape[0],) or np.any(self.restart_counts < 1):
            raise ValueError("restart_counts must be a length-N vector of integers >= 1")
        for name in ("positions", "momenta", "density_momenta"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    def permuted(self, perm: np.ndarray) -> "Ensemble":
        perm = np.asarray(perm)
        return replace(
            self,
            positions=self.positions[perm],
            momenta=self.momenta[perm],
            density_momenta=self.density_momenta[perm],
            prev_positions=self.prev_positions[perm],
            restart_counts=self.restart_counts[perm],
        )


def cholesky_or_raise(matrix: np.ndarray, name: str) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    if not np.allclose(matrix, matrix.T, rtol=1e-12, atol=1e-12):
        raise ValueError(f"{name} is not symmetric: {matrix.tolist()}")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite: {matrix.tolist()}") from None


def gaussian_draws(spec: InitSpec) -> np.ndarray:
    chol = cholesky_or_raise(spec.covariance, "init covariance")
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.count, spec.dim))
    return spec.mean + z @ chol.T


def init_ensemble(spec: InitSpec) -> Ensemble:
    positions = gaussian_draws(spec)
    zeros = np.zeros_like(positions)
    return Ensemble(
        positions=positions,
        momenta=zeros,
        density_momenta=zeros.copy(),
        prev_positions=positions.copy(),
        restart_counts=np.ones(spec.count, dtype=np.int64),
        step_index=0,
    )


class Moments(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray
    degenerate: bool


def sample_mean_cov(e: Ensemble | np.ndarray) -> Moments:
    """Empirical mean and unbiased covariance of the particle positions.

    With a single particle the covariance is undefined; it is returned as
    zeros with ``degenerate=True``.
    """
    x = e.positions if isinstance(e, Ensemble) else np.asarray(e, dtype=float)
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return Moments(mean, np.zeros((x.shape[1], x.shape[1])), True)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    return Moments(mean, cov, False)


# --- CSV snapshots ----------------------------------------------------------

def write_particles_csv(path: str | Path, positions: np.ndarray) -> None:
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    header = ",".join(f"x{j}" for j in range(positions.shape[1]))
    # %.17g round-trips every float64 and ignores locale
    np.savetxt(path, positions, fmt="%.17g", delimiter=",", header=header, comments="")


def read_particles_csv(path: str | Path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
    d = len(header.split(","))
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
    if data.size == 0:
        return np.zeros((0, d))
    return data


def warn_degenerate(message: str) -> None:
    warnings.warn(message, DegenerateSampleWarning, stacklevel=3)
