"""Projected stochastic-gradient ascent over the admission price.

Iteration k runs one observation window at the current price with minimum
length given by a strictly increasing window schedule, then updates

    p_k = clamp(p_{k-1} + eta * k**(-alpha) * grad_psi_hat, p_lo, p_hi).

The update adds the gradient because the objective (revenue per unit time) is
maximized.  Workload carries over between iterations; the workload gradient
resets at each window open.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import QueueState, run_window
from .estimators import estimate_psi_grad
from .joining import JoiningModel
from .service import ServiceDistribution

__all__ = [
    "SgdConfig",
    "SgdIteration",
    "SgdTrace",
    "project",
    "run_sgd",
    "log_schedule",
    "sqrt_schedule",
    "power_schedule",
]


def project(price: float, p_lo: float, p_hi: float) -> float:
    """Clamp a tentative price into [p_lo, p_hi]."""
    if p_lo > p_hi:
        raise ValueError(f"p_lo={p_lo} exceeds p_hi={p_hi}")
    return max(p_lo, min(p_hi, price))


def log_schedule(c: float) -> Callable[[int], float]:
    """Window schedule k -> c*log(k+1)."""
    if c <= 0.0:
        raise ValueError(f"schedule constant must be positive, got {c}")
    return lambda k: c * math.log(k + 1.0)


def sqrt_schedule(c: float) -> Callable[[int], float]:
    """Window schedule k -> c*sqrt(k)."""
    if c <= 0.0:
        raise ValueError(f"schedule constant must be positive, got {c}")
    return lambda k: c * math.sqrt(k)


def power_schedule(c: float, exponent: float) -> Callable[[int], float]:
    """Window schedule k -> c*k**exponent."""
    if c <= 0.0:
        raise ValueError(f"schedule constant must be positive, got {c}")
    if exponent <= 0.0:
        raise ValueError(f"schedule exponent must be positive, got {exponent}")
    return lambda k: c * k**exponent


@dataclass(frozen=True)
class SgdConfig:
    """Controller settings.

    eta0 may be zero to pin the price (useful for baselines); alpha must lie
    in (1/2, 1]; the window schedule must be strictly increasing in k, which
    holds for the three provided families.
    """

    p_lo: float
    p_hi: float
    p0: float
    eta0: float
    alpha: float
    window_schedule: Callable[[int], float]
    max_iterations: int

    def __post_init__(self) -> None:
        if not (0.0 <= self.p_lo <= self.p_hi):
            raise ValueError(f"need 0 <= p_lo <= p_hi, got [{self.p_lo}, {self.p_hi}]")
        if not (self.p_lo <= self.p0 <= self.p_hi):
            raise ValueError(f"p0={self.p0} outside [{self.p_lo}, {self.p_hi}]")
        if self.eta0 < 0.0:
            raise ValueError(f"eta0 must be >= 0, got {self.eta0}")
        if not (0.5 < self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in (0.5, 1], got {self.alpha}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def eta(self, k: int) -> float:
        return self.eta0 * k**-self.alpha


@dataclass(frozen=True)
class SgdIteration:
    """One row of the controller trace (all quantities for iteration k)."""

    k: int
    price: float
    t_star: float
    duration: float
    count: int
    a_hat: float
    grad_a_hat: float
    psi_grad_hat: float
    revenue: float
    sim_time: float


@dataclass(frozen=True)
class SgdTrace:
    config: SgdConfig
    iterations: list[SgdIteration]
    final_price: float
    final_state: QueueState = field(repr=False)

    def prices(self) -> list[float]:
        """Prices enforced per iteration (p_{k-1} for k = 1..L)."""
        return [it.price for it in self.iterations]


def run_sgd(
    config: SgdConfig,
    model: JoiningModel,
    service: ServiceDistribution,
    rng: np.random.Generator,
) -> SgdTrace:
    """Run the full projected-ascent loop and record every iteration."""
    price = config.p0
    state = QueueState()
    rows: list[SgdIteration] = []
    prev_t_star = 0.0
    for k in range(1, config.max_iterations + 1):
        t_star = config.window_schedule(k)
        if t_star <= prev_t_star:
            raise ValueError(
                f"window schedule must be strictly increasing: T*({k})={t_star} "
                f"does not exceed T*({k - 1})={prev_t_star}"
            )
        prev_t_star = t_star
        state, record = run_window(state, model, price, service, t_star, rng)
        est = estimate_psi_grad(record)
        rows.append(
            SgdIteration(
                k=k,
                price=price,
                t_star=t_star,
                duration=record.duration,
                count=record.count,
                a_hat=est.a_hat,
                grad_a_hat=est.grad_a_hat,
                psi_grad_hat=est.psi_grad_hat,
                revenue=price * record.count,
                sim_time=state.clock,
            )
        )
        price = project(price + config.eta(k) * est.psi_grad_hat, config.p_lo, config.p_hi)
    return SgdTrace(config=config, iterations=rows, final_price=price, final_state=state)
