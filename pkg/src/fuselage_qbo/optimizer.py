"""Staged weighted-GP UCB optimization with query-charged mean estimation.

Both methods run the same stage loop:

1. estimate the loss at a random initial force to accuracy ``eps0``;
2. at stage ``s`` pick ``F_s`` maximizing the weighted UCB score, set
   ``eps_s = std_{s-1}(F_s) / sqrt(lambda)``;
3. estimate the loss at ``F_s`` to accuracy ``eta * eps_s`` (emulated QMC
   for ``qbo``, Chebyshev-sized Monte Carlo for ``classic``), unless the
   charge would overrun the budget, in which case the run stops;
4. absorb the estimate with ``obs_sigma = eta * eps_s``.

Every charged query at stage ``s`` adds ``f_star - f(F_s)`` to the
cumulative regret.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import linprog

from . import env as fenv
from . import estimators as est
from .errors import ConfigError, DomainError
from .rff import FeatureMap, KernelSpec, denormalize, normalize, sample_feature_map
from .wgp import RESOLVE_EVERY, PosteriorState

logger = logging.getLogger(__name__)

METHODS = ("qbo", "classic")
BETA_SCHEDULES = ("constant", "theory")
_GOLDEN = (math.sqrt(5) - 1) / 2
# smallest observation std fed to the posterior; keeps weights 1/s^2 finite
ACCURACY_FLOOR = 1e-6


@dataclass(frozen=True)
class Box:
    """Continuous search domain ``lower <= F <= upper`` (pounds)."""

    lower: np.ndarray
    upper: np.ndarray

    @classmethod
    def for_env(cls, env) -> "Box":
        lo, hi = env.force_bounds
        m = env.m_actuators
        return cls(np.full(m, lo), np.full(m, hi))

    @property
    def dim(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class OptimizerConfig:
    budget: int = 20_000
    lam: float = 1.0
    lengthscale: float = 0.5
    n_features: int = 1024
    beta: float = 2.0
    beta_schedule: str = "constant"
    beta_offset: float = 0.0
    eta: float = 1.0
    delta: float = 0.05
    c1: float = 1.0
    c2: float = 1.0
    emulation: str = "uniform"
    emulation_target: str = "noisefree"
    eps0: float | None = None
    calibration_samples: int = 1000
    restarts: int = 64
    refine_top: int = 64
    sweeps: int = 3
    golden_iters: int = 12
    max_stages: int | None = None
    seed: int = 0

    def __post_init__(self):
        checks = [
            ("budget", self.budget >= 1),
            ("lam", self.lam > 0),
            ("lengthscale", self.lengthscale > 0),
            ("n_features", self.n_features >= 1),
            ("beta", self.beta >= 0),
            ("beta_schedule", self.beta_schedule in BETA_SCHEDULES),
            ("eta", self.eta > 0),
            ("delta", 0 < self.delta < 1),
            ("c1", self.c1 >= 1),
            ("c2", self.c2 >= 1),
            ("emulation", self.emulation in est.EMULATION_MODES),
            ("emulation_target", self.emulation_target in est.EMULATION_TARGETS),
            ("eps0", self.eps0 is None or self.eps0 > 0),
            ("calibration_samples", self.calibration_samples >= 2),
            ("restarts", self.restarts >= 1),
            ("refine_top", self.refine_top >= 0),
            ("sweeps", self.sweeps >= 0),
            ("golden_iters", self.golden_iters >= 1),
            ("max_stages", self.max_stages is None or self.max_stages >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"invalid value for {name}: {getattr(self, name)!r}")


@dataclass
class StageRecord:
    stage_index: int
    chosen_force: np.ndarray
    epsilon_s: float
    beta_s: float
    queries: int
    estimate: float
    posterior_std_at_choice: float
    accuracy: float
    loss: float
    mae: float


@dataclass
class RunTrace:
    method: str
    budget: int
    f_star: float
    sigma_loss: float
    calibration_queries: int
    stages: list[StageRecord] = field(default_factory=list)
    budget_too_small: bool = False

    @property
    def queries_per_stage(self) -> np.ndarray:
        return np.array([s.queries for s in self.stages], dtype=int)

    @property
    def total_queries(self) -> int:
        return int(self.queries_per_stage.sum()) if self.stages else 0

    @property
    def stage_of_query(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.stages)), self.queries_per_stage)

    @property
    def per_query_regret(self) -> np.ndarray:
        gaps = np.array([self.f_star - s.loss for s in self.stages])
        return np.repeat(gaps, self.queries_per_stage) if self.stages else np.zeros(0)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.per_query_regret)

    @property
    def incumbent_mae(self) -> np.ndarray:
        """Running minimum noise-free MAE, one entry per stage."""
        return np.minimum.accumulate([s.mae for s in self.stages]) if self.stages else np.zeros(0)

    @property
    def best_mae(self) -> float:
        return float(self.incumbent_mae[-1]) if self.stages else float("nan")


def compute_f_star(env, domain) -> tuple[float, np.ndarray]:
    """Best achievable noise-free loss over ``domain`` and its argmax.

    A finite domain is enumerated.  On a box, minimizing the MAE is the
    linear program ``min sum t  s.t.  |d0 - U F| <= t``, solved exactly.
    """
    if isinstance(domain, Box):
        # solve in forces scaled to O(1) so the LP is well conditioned
        scale = max(np.max(np.abs(domain.lower)), np.max(np.abs(domain.upper)), 1.0)
        U = env.sensitivity * scale
        d0 = env.initial_deviation
        n, m = U.shape
        c = np.concatenate([np.zeros(m), np.ones(n)])
        A = np.block([[-U, -np.eye(n)], [U, -np.eye(n)]])
        b = np.concatenate([-d0, d0])
        bounds = ([(lo / scale, hi / scale) for lo, hi in zip(domain.lower, domain.upper)]
                  + [(0, None)] * n)
        res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs",
                      options={"primal_feasibility_tolerance": 1e-10,
                               "dual_feasibility_tolerance": 1e-10})
        if not res.success:
            raise RuntimeError(f"f_star LP failed: {res.message}")
        F = np.clip(res.x[:m] * scale, domain.lower, domain.upper)
        return fenv.true_loss(env, F), F
    F_all = np.asarray(domain, dtype=float)
    if F_all.ndim != 2 or len(F_all) == 0:
        raise DomainError("empty domain")
    losses = fenv.true_loss_batch(env, F_all)
    k = int(np.argmax(losses))
    return float(losses[k]), F_all[k]


def _ucb(state, fmap, X, beta):
    mean, std = state.predict_features(fmap.transform(X))
    return mean + beta * std


class _LineScorer:
    """UCB of a fixed batch of rows as one coordinate at a time is varied.

    With a cosine feature map only column ``j`` of the inputs moves during a
    line search, so ``W x + b`` is shifted along ``W[:, j]`` instead of being
    recomputed; any other map goes through the generic posterior call.
    """

    def __init__(self, state, fmap, X, beta):
        self.state, self.fmap, self.beta = state, fmap, beta
        self.fast = isinstance(fmap, FeatureMap)
        if self.fast:
            self.WT = np.ascontiguousarray(fmap.frequencies.T)
            self.Z = X @ self.WT + fmap.phases
            scale = math.sqrt(2.0 / fmap.n_features)
            # fold the feature scale into the statistics
            self.theta = scale * state.theta
            self.Vinv = (scale * scale * state.lam) * state.precision_inv

    def score(self, X, j, v):
        if not self.fast:
            Y = X.copy()
            Y[:, j] = v
            return _ucb(self.state, self.fmap, Y, self.beta)
        C = np.multiply((v - X[:, j])[:, None], self.WT[j])
        C += self.Z
        np.cos(C, out=C)
        var = np.einsum("ij,ij->i", C @ self.Vinv, C)
        return C @ self.theta + self.beta * np.sqrt(np.maximum(var, 1e-300))

    def move(self, X, j, rows, v):
        if self.fast:
            self.Z[rows] += (v - X[rows, j])[:, None] * self.WT[j]
        X[rows, j] = v


def _golden_coordinate(scorer, X, scores, j, iters):
    """Golden-section maximization of UCB along coordinate ``j`` of each row.

    Rows whose best probe beats their current score are moved in place.
    """
    a = np.full(len(X), -1.0)
    b = np.full(len(X), 1.0)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = scorer.score(X, j, c)
    fd = scorer.score(X, j, d)
    best_v = np.where(fc >= fd, c, d)
    best_f = np.maximum(fc, fd)
    for _ in range(iters):
        left = fc >= fd
        # keep [a, d] where f(c) >= f(d), else [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        probe = np.where(left, new_c, new_d)
        fp = scorer.score(X, j, probe)
        fc, fd, c, d = (np.where(left, fp, fd), np.where(left, fc, fp),
                        np.where(left, probe, d), np.where(left, c, probe))
        better = fp > best_f
        best_v = np.where(better, probe, best_v)
        best_f = np.where(better, fp, best_f)
    improve = np.flatnonzero(best_f > scores)
    scorer.move(X, j, improve, best_v[improve])
    scores = scores.copy()
    scores[improve] = best_f[improve]
    return X, scores


def select_candidate(state, fmap, domain, beta, bounds=(fenv.F_MIN, fenv.F_MAX),
                     rng=None, config: OptimizerConfig = OptimizerConfig(),
                     extra_starts=None):
    """Argmax of the weighted UCB score over ``domain``.

    Returns ``(force_vector, normalized_input)``.  A finite domain is scored
    exhaustively (first maximum wins, i.e. lowest index).  A box is searched
    from ``config.restarts`` uniform starts, the best ``config.refine_top`` of
    which are refined by coordinate-wise golden-section sweeps.
    """
    if beta < 0:
        raise DomainError("beta must be >= 0")
    if not isinstance(domain, Box):
        F_all = np.asarray(domain, dtype=float)
        if F_all.ndim != 2 or len(F_all) == 0:
            raise DomainError("empty domain")
        X = normalize(F_all, bounds)
        k = int(np.argmax(_ucb(state, fmap, X, beta)))
        return F_all[k], X[k]

    if rng is None:
        rng = np.random.default_rng(0)
    lo = normalize(domain.lower, bounds)
    hi = normalize(domain.upper, bounds)
    X = rng.uniform(lo, hi, size=(config.restarts, domain.dim))
    if extra_starts is not None and len(extra_starts):
        X = np.vstack([X, np.atleast_2d(extra_starts)])
    scores = _ucb(state, fmap, X, beta)
    if config.refine_top and config.sweeps:
        top = np.argsort(-scores, kind="stable")[:config.refine_top]
        Xr, sr = X[top].copy(), scores[top]
        scorer = _LineScorer(state, fmap, Xr, beta)
        for _ in range(config.sweeps):
            for j in range(domain.dim):
                Xr, sr = _golden_coordinate(scorer, Xr, sr, j, config.golden_iters)
        X = np.vstack([Xr, X])
        scores = np.concatenate([sr, scores])
    X = np.clip(X, lo, hi)
    best = np.flatnonzero(scores == scores.max())
    # ties: lexicographically smallest input
    k = best[np.lexsort(X[best].T[::-1])[0]] if len(best) > 1 else best[0]
    return denormalize(X[k], bounds), X[k]


class _DiscreteScorer:
    """UCB over a fixed finite set with O(|D| R) incremental refresh."""

    def __init__(self, state, fmap, X):
        self.state = state
        self.Phi = fmap.transform(X)
        self._full()

    def _full(self):
        self.quad = np.einsum("ij,ij->i", self.Phi @ self.state.precision_inv, self.Phi)

    def update(self, k, value, obs_sigma):
        phi = self.Phi[k]
        u = self.state.precision_inv @ phi
        w = 1.0 / obs_sigma ** 2
        c = w / (1.0 + w * float(phi @ u))
        self.state.update_features(phi, value, obs_sigma)
        if self.state.n_updates % RESOLVE_EVERY == 0:
            self._full()
        else:
            self.quad -= c * (self.Phi @ u) ** 2

    def mean_std(self):
        mean = self.Phi @ self.state.theta
        std = np.sqrt(np.maximum(self.state.lam * self.quad, 1e-300))
        return mean, std


def _beta(config, state):
    if config.beta_schedule == "constant":
        return config.beta
    gamma = 0.5 * state.logdet_ratio
    return config.beta_offset + math.sqrt(2 * (gamma + 1 + math.log(1 / config.delta)))


def _streams(config, env):
    root = np.random.SeedSequence([int(config.seed), int(env.noise.seed), 31337])
    calib, init, acq, estim = root.spawn(4)
    return tuple(np.random.default_rng(s) for s in (calib, init, acq, estim))


def calibrate_sigma(env, n_samples: int, rng) -> float:
    """Empirical std of the noisy loss at zero force."""
    m = env.m_actuators
    samples = fenv.observe_many(env, np.zeros(m), n_samples, rng)
    return float(np.std(samples, ddof=1))


def _run(env, config: OptimizerConfig, domain, method: str) -> RunTrace:
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    bounds = env.force_bounds
    discrete = not isinstance(domain, Box)
    calib_rng, init_rng, acq_rng, est_rng = _streams(config, env)

    sigma_loss = calibrate_sigma(env, config.calibration_samples, calib_rng)
    f_star, _ = compute_f_star(env, domain)
    fmap = sample_feature_map(env.m_actuators, config.n_features,
                              KernelSpec(config.lengthscale), config.seed)
    state = PosteriorState.empty(config.n_features, config.lam)
    trace = RunTrace(method, config.budget, f_star, sigma_loss, config.calibration_samples)

    if discrete:
        F_all = np.asarray(domain, dtype=float)
        X_all = normalize(F_all, bounds)
        losses_all = fenv.true_loss_batch(env, F_all)
        scorer = _DiscreteScorer(state, fmap, X_all)

    def cost(acc):
        if method == "qbo":
            return est.quantum_queries(sigma_loss, acc, config.delta, config.c1, config.c2)
        return est.classical_queries(sigma_loss, acc, config.delta)

    def estimate(F, acc):
        if method == "qbo":
            return est.quantum_estimate_emulated(
                env, F, acc, config.delta, config.c2, sigma_loss, est_rng, C1=config.c1,
                emulation=config.emulation, target=config.emulation_target)
        return est.classical_estimate(env, F, acc, config.delta, sigma_loss, est_rng)

    def loss_mae(F, k):
        if discrete:
            loss = float(losses_all[k])
        else:
            loss = fenv.true_loss(env, F)
        return loss, -loss * env.initial_mae

    # initial stage: random in-domain force at accuracy eps0
    if discrete:
        k = int(init_rng.integers(len(F_all)))
        F, x = F_all[k], X_all[k]
        _, std = scorer.mean_std()
        std = float(std[k])
    else:
        k = None
        x = init_rng.uniform(normalize(domain.lower, bounds), normalize(domain.upper, bounds))
        F = denormalize(x, bounds)
        std = float(state.predict_features(fmap.transform(x[None]))[1][0])
    if config.eps0 is not None:
        acc = config.eps0
    elif sigma_loss > 0:
        acc = sigma_loss / 2
    else:
        acc = std / math.sqrt(config.lam)
    n0 = cost(acc)
    if n0 > config.budget:
        trace.budget_too_small = True
        logger.warning("budget %d smaller than the initial stage (%d queries)", config.budget, n0)
        return trace
    rep = estimate(F, acc)
    loss, mae_v = loss_mae(F, k)
    trace.stages.append(StageRecord(0, F, acc, 0.0, rep.queries_charged, rep.estimate, std,
                                    acc, loss, mae_v))
    used = rep.queries_charged
    if discrete:
        scorer.update(k, rep.estimate, acc)
    else:
        state.update_features(fmap.transform(x[None])[0], rep.estimate, acc)
    last_x = x

    s = 0
    while config.max_stages is None or s < config.max_stages:
        s += 1
        beta = _beta(config, state)
        if discrete:
            mean, stds = scorer.mean_std()
            k = int(np.argmax(mean + beta * stds))
            F, x, std = F_all[k], X_all[k], float(stds[k])
        else:
            F, x = select_candidate(state, fmap, domain, beta, bounds, acq_rng, config,
                                    extra_starts=last_x[None])
            std = float(state.predict_features(fmap.transform(x[None]))[1][0])
        eps_s = std / math.sqrt(config.lam)
        acc = max(config.eta * eps_s, ACCURACY_FLOOR)
        n = cost(acc)
        if used + n > config.budget:
            break
        rep = estimate(F, acc)
        loss, mae_v = loss_mae(F, k)
        trace.stages.append(StageRecord(s, F, eps_s, beta, rep.queries_charged, rep.estimate,
                                        std, acc, loss, mae_v))
        used += rep.queries_charged
        if discrete:
            scorer.update(k, rep.estimate, acc)
        else:
            state.update_features(fmap.transform(x[None])[0], rep.estimate, acc)
        last_x = x
    return trace


def qbo_run(env, config: OptimizerConfig = OptimizerConfig(), domain=None) -> RunTrace:
    """Staged optimization with the emulated quantum estimator."""
    return _run(env, config, Box.for_env(env) if domain is None else domain, "qbo")


def classic_bo_run(env, config: OptimizerConfig = OptimizerConfig(), domain=None) -> RunTrace:
    """Same stage loop with Chebyshev-sized classical Monte Carlo."""
    return _run(env, config, Box.for_env(env) if domain is None else domain, "classic")


def run_method(method: str, env, config: OptimizerConfig, domain=None) -> RunTrace:
    return _run(env, config, Box.for_env(env) if domain is None else domain, method)
