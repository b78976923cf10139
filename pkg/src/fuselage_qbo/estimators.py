"""Mean estimation with explicit query accounting.

Two estimators share one report type:

* classical Monte Carlo, sized by Chebyshev's inequality
  ``n = ceil(sigma^2 / (eps^2 delta))``;
* emulated quantum Monte Carlo, which returns an estimate guaranteed to lie
  within ``eps`` of the target and charges the QMC query bound instead of
  simulating any quantum state.

``log`` without a base below is the natural log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import env as fenv
from .errors import DomainError

EMULATION_MODES = ("uniform", "worst_case")
EMULATION_TARGETS = ("noisefree", "expected")


@dataclass(frozen=True)
class EstimatorReport:
    estimate: float
    epsilon: float
    delta: float
    queries_charged: int
    method: str


def _exact(x: float) -> Fraction:
    # decimal reading of the float, so 0.1 is 1/10 and ceilings are exact
    return Fraction(repr(float(x)))


def _ceil(x: float) -> int:
    # snap values within rounding noise of an integer before taking the ceiling
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return max(1, int(r))
    return max(1, math.ceil(x))


def _check_delta(delta):
    if not 0 < delta < 1:
        raise DomainError("delta must be in (0, 1)")


def chebyshev_queries(sigma: float, epsilon: float, delta: float) -> int:
    if not sigma > 0:
        raise DomainError("sigma must be > 0")
    if not epsilon > 0:
        raise DomainError("epsilon must be > 0")
    _check_delta(delta)
    n = _exact(sigma) ** 2 / (_exact(epsilon) ** 2 * _exact(delta))
    return max(1, math.ceil(n))


def qmc2_value(sigma: float, epsilon: float, delta: float, C2: float = 1.0) -> float:
    """Unrounded QMC query bound for a bounded-variance variable."""
    if not sigma > 0 or not epsilon > 0:
        raise DomainError("sigma and epsilon must be > 0")
    if not epsilon < 4 * sigma:
        raise DomainError("QMC bound requires epsilon < 4 sigma")
    if C2 < 1:
        raise DomainError("C2 must be >= 1")
    _check_delta(delta)
    L = math.log2(8 * sigma / epsilon)
    return C2 * sigma / epsilon * L ** 1.5 * math.log2(L) * math.log(1 / delta)


def qmc2_queries(sigma: float, epsilon: float, delta: float, C2: float = 1.0) -> int:
    return _ceil(qmc2_value(sigma, epsilon, delta, C2))


def qmc1_queries(epsilon: float, delta: float, C1: float = 1.0) -> int:
    """QMC query bound for a variable supported on [0, 1]."""
    if not 0 < epsilon <= 1:
        raise DomainError("epsilon must be in (0, 1]")
    if C1 < 1:
        raise DomainError("C1 must be >= 1")
    if not 0 < delta <= 1:
        raise DomainError("delta must be in (0, 1]")
    return _ceil(C1 / epsilon * math.log(1 / delta))


def loss_range(sigma: float) -> float:
    """Width of the assumed loss support ``[-1 - 3 sigma, 0]``."""
    return 1.0 + 3.0 * sigma


def quantum_queries(sigma: float, epsilon: float, delta: float,
                    C1: float = 1.0, C2: float = 1.0) -> int:
    """Charge for one emulated QMC call.

    Uses the bounded-variance bound when ``epsilon < 4 sigma``; otherwise
    rescales the loss to [0, 1] and uses the bounded-range bound.  A
    noiseless target needs a single query.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be > 0")
    if sigma == 0:
        return 1
    if epsilon < 4 * sigma:
        return qmc2_queries(sigma, epsilon, delta, C2)
    eps01 = min(1.0, epsilon / loss_range(sigma))
    return qmc1_queries(eps01, delta, C1)


def classical_queries(sigma: float, epsilon: float, delta: float) -> int:
    if sigma == 0:
        return 1
    return chebyshev_queries(sigma, epsilon, delta)


def classical_estimate(env, F, epsilon: float, delta: float, sigma_cfg: float,
                       rng: np.random.Generator | None = None) -> EstimatorReport:
    """Plain Monte Carlo mean of noisy observations at ``F``."""
    n = classical_queries(sigma_cfg, epsilon, delta)
    samples = fenv.observe_many(env, F, n, rng)
    return EstimatorReport(float(samples.mean()), float(epsilon), float(delta), n, "classical")


def quantum_estimate_emulated(env, F, epsilon: float, delta: float, C2: float,
                              sigma_cfg: float, rng: np.random.Generator,
                              C1: float = 1.0, emulation: str = "uniform",
                              target: str = "noisefree") -> EstimatorReport:
    """Emulated QMC estimate at ``F``.

    The estimate is the target (noise-free loss by default, or the analytic
    mean of the noisy observation with ``target="expected"``) plus a
    perturbation of magnitude at most ``epsilon``: uniform on
    ``[-epsilon, epsilon]``, or exactly ``+-epsilon`` with
    ``emulation="worst_case"``.
    """
    if emulation not in EMULATION_MODES:
        raise DomainError(f"emulation must be one of {EMULATION_MODES}")
    if target not in EMULATION_TARGETS:
        raise DomainError(f"target must be one of {EMULATION_TARGETS}")
    n = quantum_queries(sigma_cfg, epsilon, delta, C1, C2)
    truth = fenv.true_loss(env, F) if target == "noisefree" else fenv.expected_observation(env, F)
    if sigma_cfg == 0:
        return EstimatorReport(truth, float(epsilon), float(delta), n, "quantum")
    if emulation == "uniform":
        noise = rng.uniform(-epsilon, epsilon)
    else:
        noise = epsilon if rng.random() < 0.5 else -epsilon
    return EstimatorReport(float(truth + noise), float(epsilon), float(delta), n, "quantum")
