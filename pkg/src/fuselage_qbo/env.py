"""Simulated fuselage shape-control environment.

Actuator forces act on the cross-section through a linear surrogate: the
signed radial deviation at every measurement node is

    final = initial - U @ F

where ``U`` (inches per pound) is a sensitivity matrix.  Each measurement
node is reduced to a scalar radial deviation from the target shape, so the
target geometry itself never has to be stored.  Measurement noise is added
per node before the mean absolute error is taken.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import ConfigError, DomainError

F_MIN = -500.0
F_MAX = 500.0

# angular std of an actuator's Gaussian influence, radians
ACTUATOR_WIDTH = 0.6
# peak displacement (in) of a single actuator at |F| = F_MAX
PEAK_RANGE = (0.15, 0.45)
# MAE (in) the initial deviation is rescaled to
INITIAL_MAE_RANGE = (0.25, 0.35)
FOURIER_ORDER = 4


@dataclass(frozen=True)
class MeasurementGrid:
    n_points: int
    angles: np.ndarray

    def __post_init__(self):
        if self.n_points < 2:
            raise ConfigError("n_points must be >= 2")
        a = np.asarray(self.angles, dtype=float)
        if a.shape != (self.n_points,):
            raise ConfigError("angles must have length n_points")
        if np.any(np.diff(a) <= 0) or a[0] < 0 or a[-1] >= 2 * np.pi:
            raise ConfigError("angles must be strictly increasing in [0, 2pi)")

    @classmethod
    def uniform(cls, n_points: int) -> "MeasurementGrid":
        return cls(n_points, 2 * np.pi * np.arange(n_points) / n_points)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError("sigma must be >= 0")

    def stream(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, 7919]))


@dataclass
class Environment:
    """Black-box objective for one initial condition.

    ``rng`` is the environment's own noise stream, created from
    ``noise.seed``.  Callers that need independent streams pass their own
    generator to :func:`observe`; a single generator must not be shared
    across concurrent callers.
    """

    grid: MeasurementGrid
    sensitivity: np.ndarray
    initial_deviation: np.ndarray
    noise: NoiseModel
    force_bounds: tuple[float, float] = (F_MIN, F_MAX)
    rng: np.random.Generator = field(default=None, repr=False)

    def __post_init__(self):
        U = np.asarray(self.sensitivity, dtype=float)
        d0 = np.asarray(self.initial_deviation, dtype=float)
        if U.ndim != 2 or U.shape[0] != self.grid.n_points:
            raise ConfigError("sensitivity must be n_points x m_actuators")
        if not np.all(np.isfinite(U)) or np.any(np.all(U == 0, axis=0)):
            raise ConfigError("sensitivity must be finite with no all-zero column")
        if d0.shape != (self.grid.n_points,) or not np.all(np.isfinite(d0)):
            raise ConfigError("initial_deviation must be finite with length n_points")
        lo, hi = self.force_bounds
        if not lo < hi:
            raise ConfigError("force_bounds must satisfy F_min < F_max")
        self.sensitivity = U
        self.initial_deviation = d0
        if mae(d0) <= 0:
            raise ConfigError("initial deviation must have positive MAE")
        if self.rng is None:
            self.rng = self.noise.stream()

    @property
    def n_points(self) -> int:
        return self.grid.n_points

    @property
    def m_actuators(self) -> int:
        return self.sensitivity.shape[1]

    @property
    def initial_mae(self) -> float:
        return mae(self.initial_deviation)

    def with_sigma(self, sigma: float, seed: int | None = None) -> "Environment":
        """Same geometry, different noise model (fresh stream)."""
        noise = NoiseModel(sigma, self.noise.seed if seed is None else seed)
        return Environment(self.grid, self.sensitivity, self.initial_deviation,
                           noise, self.force_bounds)


def _circular_distance(a, b):
    d = np.abs(a - b) % (2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)


def make_env(n_points: int = 177, m_actuators: int = 8, condition_seed: int = 0,
             sigma: float = 0.1, noise_seed: int | None = None) -> Environment:
    """Build a seeded synthetic environment.

    The sensitivity of node ``i`` to actuator ``j`` is a Gaussian bump in
    angular distance around the actuator (actuators equispaced in angle),
    scaled so 500 lb on one actuator gives a peak displacement drawn from
    ``PEAK_RANGE``.  The initial deviation is a random low-order Fourier
    series rescaled to an MAE drawn from ``INITIAL_MAE_RANGE``.

    Everything except the noise stream is a pure function of
    ``condition_seed``.
    """
    if not isinstance(n_points, (int, np.integer)) or n_points < 2:
        raise ConfigError("n_points must be an integer >= 2")
    if not isinstance(m_actuators, (int, np.integer)) or m_actuators < 1:
        raise ConfigError("m_actuators must be an integer >= 1")
    if not sigma >= 0:
        raise ConfigError("sigma must be >= 0")

    rng = np.random.default_rng(np.random.SeedSequence([int(condition_seed), 177]))
    grid = MeasurementGrid.uniform(int(n_points))
    theta = grid.angles

    positions = 2 * np.pi * np.arange(m_actuators) / m_actuators + np.pi / m_actuators
    dist = _circular_distance(theta[:, None], positions[None, :])
    shape = np.exp(-dist ** 2 / (2 * ACTUATOR_WIDTH ** 2))
    peaks = rng.uniform(*PEAK_RANGE, size=m_actuators)
    U = shape / shape.max(axis=0) * (peaks / F_MAX)

    k = np.arange(FOURIER_ORDER + 1)
    scale = 1.0 / (1.0 + k)
    a = rng.normal(size=k.size) * scale
    b = rng.normal(size=k.size) * scale
    b[0] = 0.0
    d0 = (a[None, :] * np.cos(np.outer(theta, k))
          + b[None, :] * np.sin(np.outer(theta, k))).sum(axis=1)
    target = rng.uniform(*INITIAL_MAE_RANGE)
    d0 *= target / mae(d0)

    if noise_seed is None:
        noise_seed = int(condition_seed)
    return Environment(grid, U, d0, NoiseModel(float(sigma), int(noise_seed)))


def check_bounds(env: Environment, F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != env.m_actuators:
        raise DomainError(f"force vector must have length {env.m_actuators}")
    lo, hi = env.force_bounds
    if np.any(F < lo) or np.any(F > hi) or not np.all(np.isfinite(F)):
        raise DomainError(f"force outside [{lo}, {hi}]")
    return F


def final_deviation(env: Environment, F) -> np.ndarray:
    """Noise-free deviation after applying ``F``; accepts a batch (..., m)."""
    F = check_bounds(env, F)
    return env.initial_deviation - F @ env.sensitivity.T


def mae(d) -> float:
    d = np.asarray(d, dtype=float)
    return float(np.mean(np.abs(d)))


def true_loss(env: Environment, F) -> float:
    """Noise-free scaled loss ``-MAE_final / MAE_initial`` (maximized)."""
    return -mae(final_deviation(env, F)) / env.initial_mae


def true_loss_batch(env: Environment, F) -> np.ndarray:
    d = final_deviation(env, np.atleast_2d(F))
    return -np.mean(np.abs(d), axis=-1) / env.initial_mae


def observe(env: Environment, F, rng: np.random.Generator | None = None) -> float:
    """One noisy scaled-loss sample (Gaussian noise on every node)."""
    return float(observe_many(env, F, 1, rng)[0])


def observe_many(env: Environment, F, n: int, rng: np.random.Generator | None = None,
                 chunk: int = 4096) -> np.ndarray:
    """``n`` independent noisy scaled-loss samples at a single force vector."""
    d = final_deviation(env, F)
    if rng is None:
        rng = env.rng
    sigma = env.noise.sigma
    e0 = env.initial_mae
    if sigma == 0:
        return np.full(n, -mae(d) / e0)
    out = np.empty(n)
    for start in range(0, n, chunk):
        k = min(chunk, n - start)
        noisy = d[None, :] + sigma * rng.standard_normal((k, d.size))
        out[start:start + k] = -np.mean(np.abs(noisy), axis=1) / e0
    return out


def expected_observation(env: Environment, F) -> float:
    """Analytic mean of :func:`observe` (folded-Gaussian MAE per node)."""
    d = final_deviation(env, F)
    s = env.noise.sigma
    if s == 0:
        return -mae(d) / env.initial_mae
    z = d / s
    folded = s * np.sqrt(2 / np.pi) * np.exp(-z ** 2 / 2) + d * erf(z / np.sqrt(2))
    return -float(np.mean(folded)) / env.initial_mae


def discrete_grid(env: Environment, active_actuators=(0, 4), levels: int = 21) -> np.ndarray:
    """All ``levels**2`` force vectors with two active actuators.

    Rows are in lexicographic order of (first, second) active force; every
    other actuator stays at zero.
    """
    if levels < 2:
        raise DomainError("levels must be >= 2")
    i, j = (int(a) for a in active_actuators)
    m = env.m_actuators
    if i == j or not (0 <= i < m and 0 <= j < m):
        raise DomainError(f"active actuators must be two distinct indices in [0, {m})")
    lo, hi = env.force_bounds
    values = np.linspace(lo, hi, levels)
    out = np.zeros((levels * levels, m))
    for row, (a, b) in enumerate(itertools.product(values, values)):
        out[row, i] = a
        out[row, j] = b
    return out
