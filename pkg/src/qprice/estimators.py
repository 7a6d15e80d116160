"""Point estimators built from one observation window.

With T the window length and N the number of effective arrivals in it, the
mean effective interarrival estimate is T/N (identical to the sample average
because windows close exactly at an arrival), its gradient estimate is the
sample average of the pathwise interarrival gradients, and the revenue-rate
gradient follows the quotient rule applied to price/interarrival-mean:

    grad_psi = 1/a_hat - price * grad_a_hat / a_hat**2.

No bias correction is applied to the plug-in ratio; its bias vanishes as the
window grows and is part of what the diagnostics in ``analysis`` measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import WindowRecord

__all__ = ["GradientEstimate", "estimate_a", "estimate_grad_a", "estimate_psi_grad"]


@dataclass(frozen=True)
class GradientEstimate:
    """All per-window point estimates: interarrival mean, its price gradient,
    the revenue-rate gradient, and the revenue-rate plug-in value."""

    a_hat: float
    grad_a_hat: float
    psi_grad_hat: float
    psi_hat: float


def estimate_a(record: WindowRecord) -> float:
    """Mean effective interarrival time over the window: duration/count."""
    return record.duration / record.count


def estimate_grad_a(record: WindowRecord) -> float:
    """Sample average of the pathwise interarrival price-gradients."""
    return math.fsum(record.grad_interarrivals) / record.count


def estimate_psi_grad(record: WindowRecord) -> GradientEstimate:
    """Assemble the revenue-rate gradient estimate for the window's price."""
    a_hat = estimate_a(record)
    grad_a_hat = estimate_grad_a(record)
    psi_grad_hat = 1.0 / a_hat - record.price * grad_a_hat / (a_hat * a_hat)
    return GradientEstimate(
        a_hat=a_hat,
        grad_a_hat=grad_a_hat,
        psi_grad_hat=psi_grad_hat,
        psi_hat=record.price / a_hat,
    )
