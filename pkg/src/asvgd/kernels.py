"""Bilinear and Gaussian kernels, their gradients and kernel matrices.

Only the gradient in the first argument is implemented; the gradient in
the second argument follows from symmetry, ``grad2(x, y) = grad1(y, x)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import cholesky_or_raise


@dataclass(frozen=True)
class Bilinear:
    """K(x, y) = x^T A y + 1 for a symmetric positive definite A."""

    A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"bilinear kernel matrix must be square, got {A.shape}")
        cholesky_or_raise(A, "bilinear kernel matrix A")
        object.__setattr__(self, "A", A)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class Gaussian:
    """K(x, y) = exp(-|x - y|^2 / (2 sigma2)). Works in any dimension."""

    sigma2: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValueError(f"Gaussian bandwidth sigma2 must be > 0, got {self.sigma2}")
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def dim(self) -> None:
        return None

    @classmethod
    def from_sigma(cls, sigma: float) -> "Gaussian":
        return cls(float(sigma) ** 2)


KernelSpec = Bilinear | Gaussian


def _check_pair(spec: KernelSpec, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"kernel arguments must be vectors of equal length, got {x.shape} and {y.shape}")
    if spec.dim is not None and x.shape[0] != spec.dim:
        raise ValueError(f"kernel expects dimension {spec.dim}, got {x.shape[0]}")
    return x, y


def kernel_eval(spec: KernelSpec, x, y) -> float:
    x, y = _check_pair(spec, x, y)
    if isinstance(spec, Bilinear):
        return float(x @ spec.A @ y + 1.0)
    diff = x - y
    return float(np.exp(-(diff @ diff) / (2.0 * spec.sigma2)))


def kernel_grad1(spec: KernelSpec, x, y) -> np.ndarray:
    x, y = _check_pair(spec, x, y)
    if isinstance(spec, Bilinear):
        return spec.A @ y
    return -(x - y) / spec.sigma2 * kernel_eval(spec, x, y)


def kernel_grad2(spec: KernelSpec, x, y) -> np.ndarray:
    return kernel_grad1(spec, y, x)


def pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    # direct per-pair differences; the expanded |x|^2 - 2x.y + |y|^2 form
    # loses precision for near-coincident particles
    out = np.zeros((X.shape[0], X.shape[0]))
    for k in range(X.shape[1]):
        col = X[:, k]
        out += np.square(col[:, None] - col[None, :])
    return out


def _symmetrize_upper(M: np.ndarray) -> np.ndarray:
    upper = np.triu(M)
    return upper + np.triu(M, 1).T


def kernel_matrix(spec: KernelSpec, X: np.ndarray) -> np.ndarray:
    """N x N matrix of K(X_i, X_j), bit-exactly symmetric."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ValueError("kernel_matrix received non-finite particle positions")
    if spec.dim is not None and X.shape[1] != spec.dim:
        raise ValueError(f"kernel expects dimension {spec.dim}, got {X.shape[1]}")
    if isinstance(spec, Bilinear):
        return _symmetrize_upper(X @ spec.A @ X.T + 1.0)
    # (a - b)^2 == (b - a)^2 in IEEE arithmetic, so this is already
    # bit-exactly symmetric
    return np.exp(-pairwise_sq_dists(X) / (2.0 * spec.sigma2))


def kernel_grad1_matrix(spec: KernelSpec, X: np.ndarray, K: np.ndarray | None = None) -> np.ndarray:
    """Array G with G[i, j] = grad_1 K(X_i, X_j), shape N x N x d."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(spec, Bilinear):
        AY = X @ spec.A  # rows are A X_j since A is symmetric
        return np.broadcast_to(AY[None, :, :], (X.shape[0],) + AY.shape).copy()
    if K is None:
        K = kernel_matrix(spec, X)
    diff = X[:, None, :] - X[None, :, :]
    return -diff / spec.sigma2 * K[:, :, None]


def kernel_repulsion(spec: KernelSpec, X: np.ndarray, K: np.ndarray) -> np.ndarray:
    """Rows sum_j grad_1 K(X_j, X_i), the SVGD repulsion before the 1/N factor."""
    if isinstance(spec, Bilinear):
        return X.shape[0] * (X @ spec.A)
    return (K.sum(axis=1)[:, None] * X - K @ X) / spec.sigma2
