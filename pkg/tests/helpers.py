"""Shared independent oracles for the test suite.

Everything here computes expected values by a route that does not touch the
package's closed forms: direct thinning simulation for the interarrival law,
central finite differences for derivatives, and plain formula evaluation for
the joining probabilities.
"""

from __future__ import annotations

import math

import numpy as np

from qprice import ExponentialJoining, Exponential, InterarrivalLaw, PolynomialJoining

LAMBDA = 20.0
THETA1 = 0.1
THETA2 = 0.2


def ex1_model() -> PolynomialJoining:
    return PolynomialJoining(theta1=THETA1, theta2=THETA2, lambda_max=LAMBDA)


def ex_h_model() -> ExponentialJoining:
    return ExponentialJoining(theta1=THETA1, theta2=THETA2, lambda_max=LAMBDA)


def ex1_service() -> Exponential:
    return Exponential(rate=2.0)


def h_vectorized(family: str, price: float):
    """Joining probability as a plain numpy formula, by family name."""
    if family == "exponential":
        return lambda waits: np.exp(-THETA1 * price - THETA2 * waits)
    if family == "polynomial":
        return lambda waits: 1.0 / (1.0 + THETA1 * price * price + THETA2 * waits * waits)
    raise ValueError(family)


def thinning_first_arrival(h_vec, lam: float, w: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample n first-accepted epochs of a Poisson(lam) stream where the epoch
    at time t is accepted with probability h_vec((w - t)+)."""
    t = np.zeros(n)
    out = np.empty(n)
    alive = np.arange(n)
    while alive.size:
        t[alive] += rng.exponential(1.0 / lam, alive.size)
        accept = rng.random(alive.size) < h_vec(np.maximum(w - t[alive], 0.0))
        hit = alive[accept]
        out[hit] = t[hit]
        alive = alive[~accept]
    return out


def ks_distance(samples: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance of samples against a scalar CDF callable."""
    x = np.sort(samples)
    n = x.size
    f = np.array([cdf(v) for v in x])
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - f)), np.max(np.abs((i - 1) / n - f))))


def ks_critical_1pct(n: int) -> float:
    # asymptotic critical value sqrt(-ln(alpha/2)/2)/sqrt(n) at alpha = 0.01
    return 1.6276 / math.sqrt(n)


def fd_partials(model, price: float, w: float, seed: float) -> tuple[float, float]:
    """Central finite differences of the inverse CDF in price and workload."""
    hp = 1e-6 * max(1.0, price)
    hw = 1e-6 * max(1.0, w)
    fd_p = (
        InterarrivalLaw(model, price + hp, w).inverse_cdf(seed)
        - InterarrivalLaw(model, price - hp, w).inverse_cdf(seed)
    ) / (2 * hp)
    fd_w = (
        InterarrivalLaw(model, price, w + hw).inverse_cdf(seed)
        - InterarrivalLaw(model, price, w - hw).inverse_cdf(seed)
    ) / (2 * hw)
    return fd_p, fd_w


def random_law_points(rng: np.random.Generator, n: int, p_max: float = 30.0, w_max: float = 15.0):
    """Random (price, workload, seed) triples away from degenerate corners."""
    for _ in range(n):
        yield (
            float(rng.uniform(0.1, p_max)),
            float(rng.uniform(0.01, w_max)),
            float(rng.uniform(0.005, 0.995)),
        )
