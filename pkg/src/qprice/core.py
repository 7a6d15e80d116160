"""Workload recursion at effective-arrival epochs, with pathwise price gradients.

One step: draw a uniform seed, invert the interarrival law at the carried
workload to get the effective interarrival time A, push the workload through
the Lindley map, and update the price gradient of the post-arrival workload by

    grad_W_new = grad_W_prev - grad_A      if the arrival found work left,
    grad_W_new = 0                         if it found an empty system,

where grad_A chains the pure partials of the inverse CDF through the carried
workload gradient:  grad_A = d(inv)/dp + d(inv)/dw * grad_W_prev.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .joining import JoiningModel
from .service import ServiceDistribution

__all__ = ["QueueState", "ArrivalEvent", "WindowRecord", "step", "run_window", "run_arrivals"]

_SEED_FLOOR = 2.220446049250313e-16  # replaces the measure-zero draw 0.0


@dataclass(frozen=True)
class QueueState:
    """Queue snapshot just after an effective arrival.

    workload_post is the remaining work including the arrival's own service;
    grad_p_workload is its pathwise derivative in the price; clock is the
    epoch of the arrival; arrivals_seen counts effective arrivals so far.
    """

    workload_post: float = 0.0
    grad_p_workload: float = 0.0
    clock: float = 0.0
    arrivals_seen: int = 0

    def __post_init__(self) -> None:
        if self.workload_post < 0.0:
            raise ValueError(f"workload_post must be >= 0, got {self.workload_post}")


@dataclass(frozen=True)
class ArrivalEvent:
    """Everything observed at one effective arrival."""

    interarrival: float
    grad_p_interarrival: float
    service: float
    regenerated: bool
    workload_pre: float
    seed: float


@dataclass(frozen=True)
class WindowRecord:
    """All observables from one constant-price observation window."""

    price: float
    duration: float
    count: int
    interarrivals: list[float]
    grad_interarrivals: list[float]
    opened_at: float
    regenerations: int

    def __post_init__(self) -> None:
        if self.count < 1 or self.count != len(self.interarrivals) or self.count != len(self.grad_interarrivals):
            raise ValueError("count must equal the length of both sample lists and be >= 1")
        if self.duration <= 0.0:
            raise ValueError(f"duration must be positive, got {self.duration}")


def _advance(
    model: JoiningModel,
    price: float,
    w_prev: float,
    gw_prev: float,
    seed: float,
    service: float,
) -> tuple[float, float, float, float, float, bool]:
    """One arrival epoch.  Returns (a, grad_a, w_pre, w_new, gw_new, regenerated).

    The idle branch sets the pre-arrival workload to an exact 0.0 so the
    regeneration test never needs a tolerance.
    """
    a, d_price, d_workload, idle = model.inverse_with_partials(price, w_prev, seed)
    grad_a = d_price + d_workload * gw_prev
    if idle:
        w_pre = 0.0
    else:
        w_pre = w_prev - a
        if w_pre < 0.0:
            w_pre = 0.0
    regenerated = w_pre == 0.0
    gw_new = 0.0 if regenerated else gw_prev - grad_a
    return a, grad_a, w_pre, w_pre + service, gw_new, regenerated


def step(
    state: QueueState,
    model: JoiningModel,
    price: float,
    rng: np.random.Generator,
    service: ServiceDistribution,
) -> tuple[QueueState, ArrivalEvent]:
    """Advance the queue by one effective arrival."""
    seed = rng.random()
    if seed == 0.0:
        seed = _SEED_FLOOR
    s = float(service.sample(rng))
    a, grad_a, w_pre, w_new, gw_new, regen = _advance(
        model, price, state.workload_post, state.grad_p_workload, seed, s
    )
    new_state = QueueState(
        workload_post=w_new,
        grad_p_workload=gw_new,
        clock=state.clock + a,
        arrivals_seen=state.arrivals_seen + 1,
    )
    event = ArrivalEvent(
        interarrival=a,
        grad_p_interarrival=grad_a,
        service=s,
        regenerated=regen,
        workload_pre=w_pre,
        seed=seed,
    )
    return new_state, event


def run_window(
    state: QueueState,
    model: JoiningModel,
    price: float,
    service: ServiceDistribution,
    min_duration: float,
    rng: np.random.Generator,
    block: int = 1024,
    kernel: bool = True,
) -> tuple[QueueState, WindowRecord]:
    """Run one constant-price window of minimum length ``min_duration``.

    The workload gradient resets to zero at the window open.  Steps continue
    until the elapsed window time first reaches min_duration, so the window
    closes exactly at an effective arrival and always contains at least one.
    Randomness is drawn in blocks; draws left over in the closing block are
    discarded.  Closed-form families run on the compiled kernel unless
    ``kernel`` is false (the pure-python path exists as its reference).
    """
    if min_duration <= 0.0:
        raise ValueError(f"min_duration must be positive, got {min_duration}")
    w = state.workload_post
    gw = 0.0
    elapsed = 0.0
    interarrivals: list[float] = []
    grads: list[float] = []
    regenerations = 0
    use_kernel = kernel and model.family in ("exponential", "polynomial")
    if use_kernel:
        from . import _kernels

        code = _kernels.family_code(model)
        out_a = np.empty(block)
        out_ga = np.empty(block)
    closed = False
    while not closed:
        seeds = rng.random(block)
        seeds[seeds == 0.0] = _SEED_FLOOR
        services = service.sample_many(rng, block)
        if use_kernel:
            n, w, gw, elapsed, regen, closed = _kernels.window_block(
                code, model.theta1, model.theta2, model.lambda_max, price,
                w, gw, elapsed, min_duration, seeds, services, out_a, out_ga,
            )
            interarrivals.extend(out_a[:n].tolist())
            grads.extend(out_ga[:n].tolist())
            regenerations += regen
        else:
            for i in range(block):
                a, grad_a, _, w, gw, regen = _advance(model, price, w, gw, seeds[i], services[i])
                elapsed += a
                interarrivals.append(a)
                grads.append(grad_a)
                if regen:
                    regenerations += 1
                if elapsed >= min_duration:
                    closed = True
                    break
    record = WindowRecord(
        price=price,
        duration=elapsed,
        count=len(interarrivals),
        interarrivals=interarrivals,
        grad_interarrivals=grads,
        opened_at=state.clock,
        regenerations=regenerations,
    )
    new_state = QueueState(
        workload_post=w,
        grad_p_workload=gw,
        clock=state.clock + elapsed,
        arrivals_seen=state.arrivals_seen + len(interarrivals),
    )
    return new_state, record


def run_arrivals(
    state: QueueState,
    model: JoiningModel,
    price: float,
    service: ServiceDistribution,
    n_arrivals: int,
    rng: np.random.Generator,
) -> tuple[QueueState, float]:
    """Run exactly ``n_arrivals`` effective arrivals at a pinned price.

    Returns the carried state and the elapsed time; used by long-run
    estimators that need totals rather than per-arrival records.  Dispatches
    to a compiled kernel for the closed-form families.
    """
    if n_arrivals < 1:
        raise ValueError(f"n_arrivals must be >= 1, got {n_arrivals}")
    seeds = rng.random(n_arrivals)
    seeds[seeds == 0.0] = _SEED_FLOOR
    services = service.sample_many(rng, n_arrivals)
    if model.family in ("exponential", "polynomial"):
        from . import _kernels

        elapsed, w, gw, *_ = _kernels.pinned_run(
            _kernels.family_code(model),
            model.theta1,
            model.theta2,
            model.lambda_max,
            price,
            state.workload_post,
            state.grad_p_workload,
            seeds,
            services,
        )
    else:
        w = state.workload_post
        gw = state.grad_p_workload
        elapsed = 0.0
        for k in range(n_arrivals):
            a, _, _, w, gw, _ = _advance(model, price, w, gw, seeds[k], services[k])
            elapsed += a
    new_state = QueueState(
        workload_post=w,
        grad_p_workload=gw,
        clock=state.clock + elapsed,
        arrivals_seen=state.arrivals_seen + n_arrivals,
    )
    return new_state, elapsed
