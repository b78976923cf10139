"""RBF kernel and its random Fourier feature approximation.

For the RBF kernel with lengthscale ``l`` the spectral density is
``N(0, I / l**2)``, so

    phi(x) = sqrt(2 / R) * cos(W x + b),   W_ij ~ N(0, 1/l^2),  b_i ~ U[0, 2pi)

gives ``E[phi(x) . phi(y)] = exp(-|x - y|^2 / (2 l^2))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class KernelSpec:
    lengthscale: float = 0.5

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise DomainError("lengthscale must be > 0")


def rbf(x, y, spec: KernelSpec) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DomainError(f"dimension mismatch: {x.shape} vs {y.shape}")
    r2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-r2 / (2 * spec.lengthscale ** 2)))


def rbf_matrix(X, Y, spec: KernelSpec) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DomainError("dimension mismatch")
    r2 = ((X[:, None, :] - Y[None, :, :]) ** 2).sum(-1)
    return np.exp(-r2 / (2 * spec.lengthscale ** 2))


@dataclass(frozen=True)
class FeatureMap:
    """Frozen cosine random-feature map; arrays are read-only."""

    frequencies: np.ndarray
    phases: np.ndarray
    lengthscale: float
    seed: int

    @property
    def n_features(self) -> int:
        return self.frequencies.shape[0]

    @property
    def input_dim(self) -> int:
        return self.frequencies.shape[1]

    def transform(self, X) -> np.ndarray:
        """Features for a batch ``(n, d)`` -> ``(n, R)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DomainError(f"expected inputs of dimension {self.input_dim}, got {X.shape[1]}")
        return np.sqrt(2.0 / self.n_features) * np.cos(X @ self.frequencies.T + self.phases)


class IdentityFeatureMap:
    """Exact finite-dimensional map ``phi(x) = x`` (linear kernel)."""

    def __init__(self, dim: int):
        self.input_dim = self.n_features = int(dim)

    def transform(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.input_dim:
            raise DomainError("dimension mismatch")
        return X.copy()

    def kernel(self, X, Y) -> np.ndarray:
        return np.atleast_2d(X) @ np.atleast_2d(Y).T


def sample_feature_map(d: int, R: int = 1024, spec: KernelSpec = KernelSpec(),
                       seed: int = 0) -> FeatureMap:
    if d < 1 or R < 1:
        raise DomainError("d and R must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1024]))
    W = rng.normal(scale=1.0 / spec.lengthscale, size=(R, d))
    b = rng.uniform(0.0, 2 * np.pi, size=R)
    W.setflags(write=False)
    b.setflags(write=False)
    return FeatureMap(W, b, spec.lengthscale, int(seed))


def features(fmap: FeatureMap, x) -> np.ndarray:
    """Feature vector of a single input ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError("features() takes a single d-vector; use transform() for batches")
    return fmap.transform(x[None, :])[0]


def normalize(F, bounds) -> np.ndarray:
    """Map forces from ``[lo, hi]`` to ``[-1, 1]``."""
    lo, hi = bounds
    return (np.asarray(F, dtype=float) - 0.5 * (lo + hi)) / (0.5 * (hi - lo))


def denormalize(x, bounds) -> np.ndarray:
    lo, hi = bounds
    F = np.asarray(x, dtype=float) * (0.5 * (hi - lo)) + 0.5 * (lo + hi)
    return np.clip(F, lo, hi)
