"""Weighted Gaussian-process posterior.

The posterior is kept in feature space, where each observation ``(x, y)``
with accuracy ``s`` contributes weight ``w = 1/s**2``:

    V = lambda I + sum_k w_k phi_k phi_k^T
    b = sum_k w_k y_k phi_k
    mean(x) = phi(x)^T V^{-1} b
    var(x)  = lambda * phi(x)^T V^{-1} phi(x)

Storage and per-update cost are O(R^2) no matter how many observations have
been absorbed.  :func:`kernel_posterior_exact` is the dense kernel-space form
of the same posterior and is only meant as a cross-check.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.blas import dger

from .errors import DomainError, NumericalError
from .rff import KernelSpec, rbf_matrix

logger = logging.getLogger(__name__)

RESOLVE_EVERY = 256
DRIFT_TOL = 1e-8
_VAR_FLOOR = 1e-300


@dataclass(frozen=True)
class WeightedObservation:
    input: np.ndarray
    value: float
    obs_sigma: float

    def __post_init__(self):
        if not self.obs_sigma > 0:
            raise DomainError("obs_sigma must be > 0")


@dataclass
class PosteriorState:
    """Feature-space sufficient statistics.

    ``precision_inv`` is maintained by Sherman-Morrison updates and replaced
    by a fresh inverse every ``RESOLVE_EVERY`` updates; the relative drift
    seen at each re-solve is kept in ``max_drift``.
    """

    precision: np.ndarray
    precision_inv: np.ndarray
    weighted_response: np.ndarray
    lam: float
    n_updates: int = 0
    logdet_ratio: float = 0.0
    max_drift: float = 0.0
    _theta: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def empty(cls, n_features: int, lam: float = 1.0) -> "PosteriorState":
        if not lam > 0:
            raise DomainError("lambda must be > 0")
        R = int(n_features)
        return cls(precision=np.eye(R) * lam, precision_inv=np.eye(R) / lam,
                   weighted_response=np.zeros(R), lam=float(lam))

    @property
    def n_features(self) -> int:
        return self.weighted_response.size

    @property
    def theta(self) -> np.ndarray:
        """``V^{-1} b``, cached between updates."""
        if self._theta is None:
            self._theta = self.precision_inv @ self.weighted_response
        return self._theta

    def copy(self) -> "PosteriorState":
        return PosteriorState(self.precision.copy(), self.precision_inv.copy(),
                              self.weighted_response.copy(), self.lam, self.n_updates,
                              self.logdet_ratio, self.max_drift)

    def resolve(self) -> float:
        """Recompute ``V^{-1}`` from scratch; returns the relative drift."""
        try:
            fresh = np.linalg.inv(self.precision)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"precision matrix singular after {self.n_updates} updates "
                f"(lambda={self.lam})") from exc
        fresh = 0.5 * (fresh + fresh.T)
        scale = np.max(np.abs(fresh))
        drift = float(np.max(np.abs(fresh - self.precision_inv)) / scale)
        self.max_drift = max(self.max_drift, drift)
        if drift > DRIFT_TOL:
            logger.warning("inverse drift %.3g exceeds %.1g after %d updates",
                           drift, DRIFT_TOL, self.n_updates)
        self.precision_inv = np.ascontiguousarray(fresh)
        self._theta = None
        return drift

    def update_features(self, phi: np.ndarray, value: float, obs_sigma: float) -> "PosteriorState":
        """Absorb one weighted observation given its feature vector (in place)."""
        if not obs_sigma > 0:
            raise DomainError("obs_sigma must be > 0")
        w = 1.0 / float(obs_sigma) ** 2
        phi = np.ascontiguousarray(phi, dtype=float)
        u = self.precision_inv @ phi
        # phi^T V^-1 phi > 0 in exact arithmetic; clip roundoff
        denom = 1.0 + w * max(float(phi @ u), 0.0)
        # symmetric rank-one updates in place; C-order .T is column-major
        dger(w, phi, phi, a=self.precision.T, overwrite_a=1)
        dger(-w / denom, u, u, a=self.precision_inv.T, overwrite_a=1)
        self.weighted_response += (w * float(value)) * phi
        self.logdet_ratio += float(np.log(denom))
        self.n_updates += 1
        self._theta = None
        if self.n_updates % RESOLVE_EVERY == 0:
            self.resolve()
        return self

    def predict_features(self, Phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and std for a batch of feature rows ``(n, R)``."""
        Phi = np.atleast_2d(Phi)
        mean = Phi @ self.theta
        quad = np.einsum("ij,ij->i", Phi @ self.precision_inv, Phi)
        var = self.lam * quad
        if np.any(var < -1e-8 * max(1.0, float(np.max(np.abs(var))))):
            raise NumericalError(
                f"negative posterior variance {var.min():.3g}; "
                f"n_updates={self.n_updates}, max_drift={self.max_drift:.3g}")
        return mean, np.sqrt(np.maximum(var, _VAR_FLOOR))


def update(state: PosteriorState, fmap, obs: WeightedObservation) -> PosteriorState:
    """Absorb ``obs`` into ``state`` in place and return it.

    Use ``state.copy()`` first when the prior state must be kept.
    """
    phi = fmap.transform(np.asarray(obs.input, dtype=float)[None, :])[0]
    return state.update_features(phi, obs.value, obs.obs_sigma)


def predict(state: PosteriorState, fmap, x) -> tuple[float, float]:
    mean, std = state.predict_features(fmap.transform(np.asarray(x, dtype=float)[None, :]))
    return float(mean[0]), float(std[0])


def predict_batch(state: PosteriorState, fmap, X) -> tuple[np.ndarray, np.ndarray]:
    return state.predict_features(fmap.transform(X))


def ucb_score(state: PosteriorState, fmap, x, beta: float) -> float:
    if beta < 0:
        raise DomainError("beta must be >= 0")
    mean, std = predict(state, fmap, x)
    return mean + beta * std


def ucb_batch(state: PosteriorState, fmap, X, beta: float) -> np.ndarray:
    mean, std = predict_batch(state, fmap, X)
    return mean + beta * std


def kernel_posterior_exact(X, y, sigmas, lam, kernel, x_star, cond_limit=1e12):
    """Dense weighted kernel-space posterior at ``x_star``.

    ``kernel`` is a :class:`KernelSpec` (RBF) or a callable
    ``k(A, B) -> Gram matrix``.  Returns ``(mean, std)`` arrays when
    ``x_star`` is a batch, scalars for a single point.
    """
    kfun = (lambda A, B: rbf_matrix(A, B, kernel)) if isinstance(kernel, KernelSpec) else kernel
    xs = np.asarray(x_star, dtype=float)
    single = xs.ndim == 1
    xs = np.atleast_2d(xs)
    prior = np.array([kfun(r[None], r[None])[0, 0] for r in xs])
    X = np.asarray(X, dtype=float).reshape(-1, xs.shape[1]) if np.size(X) else np.zeros((0, xs.shape[1]))
    if len(X) == 0:
        mean = np.zeros(len(xs))
        std = np.sqrt(prior)
    else:
        y = np.asarray(y, dtype=float)
        w_half = 1.0 / np.asarray(sigmas, dtype=float)
        Kt = w_half[:, None] * kfun(X, X) * w_half[None, :]
        A = Kt + lam * np.eye(len(X))
        cond = np.linalg.cond(A)
        if not np.isfinite(cond) or cond > cond_limit:
            raise NumericalError(f"kernel system ill-conditioned (cond={cond:.3g})")
        ks = w_half[None, :] * kfun(xs, X)
        alpha = np.linalg.solve(A, w_half * y)
        mean = ks @ alpha
        var = prior - np.einsum("ij,ji->i", ks, np.linalg.solve(A, ks.T))
        std = np.sqrt(np.maximum(var, 0.0))
    if single:
        return float(mean[0]), float(std[0])
    return mean, std
