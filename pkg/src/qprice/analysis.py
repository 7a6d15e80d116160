"""Experiment harnesses: revenue-curve oracle, coupling, bias/variance, regret.

Everything here is driven by explicit generators or spawned substreams so
that grid points and replications are independent tasks whose results are
reduced in a fixed order; output does not depend on how work is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat

import numpy as np

from .core import QueueState, _advance, run_arrivals, run_window
from .estimators import estimate_psi_grad
from .joining import JoiningModel
from .service import ServiceDistribution
from .sgd import SgdTrace

__all__ = [
    "PsiCurve",
    "CouplingReport",
    "BiasVarianceRow",
    "OracleGradient",
    "RegretReport",
    "estimate_psi_curve",
    "run_coupling",
    "bias_variance_diagnostic",
    "compute_regret",
    "service_study",
]


@dataclass(frozen=True)
class PsiCurve:
    """Simulated revenue-rate curve over a price grid.

    argmax_price/argmax_value are the raw grid argmax; refined_price adds a
    quadratic fit through the top three grid points, which trims the
    grid-resolution bias when the maximizer falls between grid nodes.
    """

    grid: np.ndarray
    psi_hat: np.ndarray
    n_eff: int
    argmax_price: float
    argmax_value: float
    refined_price: float

    def value_at(self, price: float) -> float:
        """Linear interpolation of the simulated curve."""
        return float(np.interp(price, self.grid, self.psi_hat))


def _psi_point(
    model: JoiningModel,
    service: ServiceDistribution,
    price: float,
    n_eff: int,
    rng: np.random.Generator,
) -> float:
    _, elapsed = run_arrivals(QueueState(), model, price, service, n_eff, rng)
    return price * n_eff / elapsed


def _refine_argmax(grid: np.ndarray, psi: np.ndarray, i: int) -> float:
    if i == 0 or i == len(grid) - 1:
        return float(grid[i])
    x = grid[i - 1 : i + 2]
    y = psi[i - 1 : i + 2]
    a, b, _ = np.polyfit(x, y, 2)
    if a >= 0.0:
        return float(grid[i])
    return float(np.clip(-b / (2.0 * a), x[0], x[2]))


def estimate_psi_curve(
    model: JoiningModel,
    service: ServiceDistribution,
    price_grid,
    n_eff: int,
    rng: np.random.Generator,
    threads: int = 1,
) -> PsiCurve:
    """Simulate the long-run revenue rate at every grid price.

    Each grid point runs the queue from empty for n_eff effective arrivals on
    its own substream spawned from ``rng``, so the curve is reproducible for
    any thread count.
    """
    grid = np.asarray(sorted(price_grid), dtype=float)
    if grid.size == 0:
        raise ValueError("price_grid must be nonempty")
    if n_eff < 1:
        raise ValueError(f"n_eff must be >= 1, got {n_eff}")
    streams = rng.spawn(grid.size)
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            psi = list(
                pool.map(
                    _psi_point,
                    repeat(model),
                    repeat(service),
                    [float(p) for p in grid],
                    repeat(n_eff),
                    streams,
                )
            )
    else:
        psi = [_psi_point(model, service, float(p), n_eff, s) for p, s in zip(grid, streams)]
    psi_arr = np.asarray(psi)
    i = int(np.argmax(psi_arr))
    return PsiCurve(
        grid=grid,
        psi_hat=psi_arr,
        n_eff=n_eff,
        argmax_price=float(grid[i]),
        argmax_value=float(psi_arr[i]),
        refined_price=_refine_argmax(grid, psi_arr, i),
    )


@dataclass(frozen=True)
class CouplingReport:
    """Contraction measurements for two queues driven by shared randomness.

    The series are replication means indexed by arrival number; decay_rate is
    the per-arrival geometric factor fitted to the workload-difference series
    over its strictly positive prefix.  coupling_steps holds, per replication,
    the first arrival index at which the pre-arrival workloads coincide
    exactly (-1 if never within the horizon), and post_coupling_drift the
    largest change in the arrival-time gap after that index (exactly zero
    when the paths have truly merged).
    """

    workload_gap: np.ndarray
    interarrival_gap: np.ndarray
    arrival_time_gap: np.ndarray
    decay_rate: float
    coupling_steps: np.ndarray
    post_coupling_drift: np.ndarray


def run_coupling(
    model: JoiningModel,
    service: ServiceDistribution,
    price: float,
    w1_0: float,
    w2_0: float,
    n_steps: int,
    replications: int,
    rng: np.random.Generator,
) -> CouplingReport:
    """Drive two initial workloads with common seeds and service draws."""
    if n_steps < 1 or replications < 1:
        raise ValueError("n_steps and replications must be >= 1")
    dw = np.zeros(n_steps)
    da = np.zeros(n_steps)
    dat = np.zeros(n_steps)
    couple_at = np.full(replications, -1, dtype=int)
    drift = np.zeros(replications)
    for r, stream in enumerate(rng.spawn(replications)):
        seeds = stream.random(n_steps)
        seeds[seeds == 0.0] = 2.220446049250313e-16
        services = service.sample_many(stream, n_steps)
        w1, w2 = w1_0, w2_0
        # the arrival-time gap accumulates from per-step differences, so once
        # the paths merge (identical interarrivals) it is bitwise frozen
        at_gap = 0.0
        gap_frozen = None
        for n in range(n_steps):
            a1, _, pre1, w1, _, _ = _advance(model, price, w1, 0.0, seeds[n], services[n])
            a2, _, pre2, w2, _, _ = _advance(model, price, w2, 0.0, seeds[n], services[n])
            at_gap += a1 - a2
            dw[n] += abs(w1 - w2)
            da[n] += abs(a1 - a2)
            dat[n] += abs(at_gap)
            if couple_at[r] < 0 and pre1 == pre2:
                couple_at[r] = n
                gap_frozen = at_gap
            elif gap_frozen is not None:
                d = abs(at_gap - gap_frozen)
                if d > drift[r]:
                    drift[r] = d
    dw /= replications
    da /= replications
    dat /= replications
    positive = dw > 0.0
    if positive.sum() >= 2:
        idx = np.nonzero(positive)[0]
        slope = np.polyfit(idx, np.log(dw[idx]), 1)[0]
        decay = float(math.exp(slope))
    else:
        decay = 0.0
    return CouplingReport(
        workload_gap=dw,
        interarrival_gap=da,
        arrival_time_gap=dat,
        decay_rate=decay,
        coupling_steps=couple_at,
        post_coupling_drift=drift,
    )


@dataclass(frozen=True)
class BiasVarianceRow:
    """Replicated-window statistics of the revenue-gradient estimator at one
    minimum window length."""

    t_star: float
    replications: int
    mean_grad: float
    std_error: float
    bias_proxy: float
    second_moment: float


@dataclass(frozen=True)
class OracleGradient:
    """Finite-difference reference slope of the long-run revenue rate.

    Averaged over independent common-random-number replicates so its own
    uncertainty is measurable; std_error is nan with a single replicate.
    """

    value: float
    std_error: float
    step: float
    arrivals: int
    replications: int


def bias_variance_diagnostic(
    model: JoiningModel,
    service: ServiceDistribution,
    price: float,
    window_sizes,
    replications,
    rng: np.random.Generator,
    burn_in_arrivals: int = 20_000,
    oracle_step: float = 0.2,
    oracle_arrivals: int = 200_000,
    oracle_replications: int = 5,
) -> tuple[list[BiasVarianceRow], OracleGradient]:
    """Estimator bias and dispersion against a finite-difference oracle.

    A single long burn-in at the target price freezes a carry-over workload;
    every window then starts from that same state (gradient reset to zero, as
    in the live controller) on an independent substream.  The bias proxy is
    the replication mean minus the oracle value: the central difference of
    long pinned runs at price +/- oracle_step, with common random numbers
    within each replicate and the replicates averaged so the oracle carries
    its own standard error.  ``replications`` may be one count for all window
    sizes or a sequence aligned with ``window_sizes``.

    This replicates from a frozen state rather than from the in-run filtration
    the bias is defined against; it is the observable stand-in for that
    conditional object.
    """
    window_sizes = list(window_sizes)
    if any(b <= a for a, b in zip(window_sizes, window_sizes[1:])):
        raise ValueError("window_sizes must be increasing")
    if isinstance(replications, int):
        reps = [replications] * len(window_sizes)
    else:
        reps = [int(r) for r in replications]
        if len(reps) != len(window_sizes):
            raise ValueError("replications must match window_sizes in length")
    if oracle_replications < 1:
        raise ValueError("oracle_replications must be >= 1")

    burn_state, _ = run_arrivals(QueueState(), model, price, service, burn_in_arrivals, rng)
    frozen = QueueState(workload_post=burn_state.workload_post)

    fd_estimates = []
    for _ in range(oracle_replications):
        crn_seed = int(rng.integers(2**63))
        psi_side = []
        for p_side in (price - oracle_step, price + oracle_step):
            side_rng = np.random.default_rng(crn_seed)
            _, elapsed = run_arrivals(QueueState(), model, p_side, service, oracle_arrivals, side_rng)
            psi_side.append(p_side * oracle_arrivals / elapsed)
        fd_estimates.append((psi_side[1] - psi_side[0]) / (2.0 * oracle_step))
    oracle = OracleGradient(
        value=float(np.mean(fd_estimates)),
        std_error=(
            float(np.std(fd_estimates, ddof=1) / math.sqrt(oracle_replications))
            if oracle_replications > 1
            else float("nan")
        ),
        step=oracle_step,
        arrivals=oracle_arrivals,
        replications=oracle_replications,
    )

    rows = []
    for t_star, n_rep in zip(window_sizes, reps):
        grads = np.empty(n_rep)
        for r, stream in enumerate(rng.spawn(n_rep)):
            _, record = run_window(frozen, model, price, service, t_star, stream)
            grads[r] = estimate_psi_grad(record).psi_grad_hat
        mean = float(grads.mean())
        rows.append(
            BiasVarianceRow(
                t_star=float(t_star),
                replications=n_rep,
                mean_grad=mean,
                std_error=float(grads.std(ddof=1) / math.sqrt(n_rep)) if n_rep > 1 else float("nan"),
                bias_proxy=mean - oracle.value,
                second_moment=float(np.mean(grads * grads)),
            )
        )
    return rows, oracle


@dataclass(frozen=True)
class RegretReport:
    """Cumulative revenue shortfall of a controller trace against the
    grid-oracle optimum, next to the schedule-shaped comparator sum."""

    p_star: float
    psi_star: float
    increments: np.ndarray
    cumulative: np.ndarray
    comparator: np.ndarray = field(repr=False)

    def ratio(self) -> np.ndarray:
        return self.cumulative / self.comparator


def compute_regret(trace: SgdTrace, oracle: PsiCurve) -> RegretReport:
    """Per-iteration regret increments psi_star*T_k - price*N_k and their sum.

    The comparator accumulates T*_k * k**(-alpha/2), the shape the shortfall
    is expected to track when the controller converges at its nominal rate.
    The exact empirical sum is reported as-is; it also contains the
    lower-order terms a leading-order analysis drops.
    """
    lo, hi = float(oracle.grid[0]), float(oracle.grid[-1])
    for it in trace.iterations:
        if not (lo <= it.price <= hi):
            raise ValueError(f"trace price {it.price} outside oracle grid [{lo}, {hi}]")
    alpha = trace.config.alpha
    increments = np.array(
        [oracle.argmax_value * it.duration - it.price * it.count for it in trace.iterations]
    )
    comparator = np.cumsum(
        [it.t_star * it.k ** (-alpha / 2.0) for it in trace.iterations]
    )
    return RegretReport(
        p_star=oracle.argmax_price,
        psi_star=oracle.argmax_value,
        increments=increments,
        cumulative=np.cumsum(increments),
        comparator=comparator,
    )


def service_study(
    model: JoiningModel,
    services,
    price_grid,
    n_eff: int,
    rng: np.random.Generator,
    threads: int = 1,
) -> list[tuple[ServiceDistribution, PsiCurve]]:
    """Revenue curves for one joining model across several service laws."""
    services = list(services)
    return [
        (service, estimate_psi_curve(model, service, price_grid, n_eff, stream, threads))
        for service, stream in zip(services, rng.spawn(len(services)))
    ]
