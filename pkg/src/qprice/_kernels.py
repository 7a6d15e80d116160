"""Compiled fast paths for long pinned-price runs of the closed-form families.

The recursion here mirrors ``core._advance`` exactly (same branch rule, same
guarded softplus/sigmoid forms); an equivalence test in the suite drives both
implementations with identical pre-drawn randomness.  Only aggregate
statistics are returned, which is what grid-oracle and diagnostic runs need.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .joining import ExponentialJoining, JoiningModel, PolynomialJoining

EXPONENTIAL = 0
POLYNOMIAL = 1


def family_code(model: JoiningModel) -> int:
    if isinstance(model, ExponentialJoining):
        return EXPONENTIAL
    if isinstance(model, PolynomialJoining):
        return POLYNOMIAL
    raise ValueError(f"no compiled kernel for family {model.family!r}")


@njit(cache=True)
def _draw(code: int, th1: float, th2: float, lam: float, price: float, w: float, z: float):
    """Invert the interarrival CDF and return (a, d_price, d_workload, idle)."""
    log1m = math.log1p(-z)
    if code == EXPONENTIAL:
        fww = -math.expm1(-(lam / th2) * math.exp(-th1 * price) * (-math.expm1(-th2 * w)))
        if z < fww:
            x = th1 * price + th2 * w + math.log(-log1m * th2 / lam)
            if x > 35.0:
                sp = x + math.exp(-x)
            elif x < -35.0:
                sp = math.exp(x)
            else:
                sp = math.log1p(math.exp(x))
            if x >= 0.0:
                sig = 1.0 / (1.0 + math.exp(-x))
            else:
                e = math.exp(x)
                sig = e / (1.0 + e)
            return sp / th2, (th1 / th2) * sig, sig, False
        a = w + math.expm1(-th2 * w) / th2 - math.exp(th1 * price) * log1m / lam
        dp = -(th1 / lam) * math.exp(th1 * price) * log1m
        dw = -math.expm1(-th2 * w)
        return a, dp, dw, True
    a_coef = 1.0 + th1 * price * price
    s = math.sqrt(th2)
    q = math.sqrt(a_coef)
    atan_w = math.atan(s * w / q)
    denom = a_coef + th2 * w * w
    fww = -math.expm1(-(lam / (s * q)) * atan_w)
    if z < fww:
        theta = atan_w + (s * q / lam) * log1m
        tan_t = math.tan(theta)
        sec2 = 1.0 + tan_t * tan_t
        a = w - (q / s) * tan_t
        dp = (
            -(th1 * price / (s * q)) * tan_t
            + sec2 * (th1 * price * w / denom - (th1 * price / lam) * log1m)
        )
        dw = 1.0 - sec2 * a_coef / denom
        return a, dp, dw, False
    a = w - (a_coef / lam) * log1m - (q / s) * atan_w
    dp = (
        -(2.0 * th1 * price / lam) * log1m
        + th1 * price * w / denom
        - (th1 * price / (s * q)) * atan_w
    )
    dw = th2 * w * w / denom
    return a, dp, dw, True


@njit(cache=True)
def window_block(
    code: int,
    th1: float,
    th2: float,
    lam: float,
    price: float,
    w0: float,
    gw0: float,
    elapsed0: float,
    t_star: float,
    seeds: np.ndarray,
    services: np.ndarray,
    out_a: np.ndarray,
    out_ga: np.ndarray,
):
    """Consume one block of randomness inside an observation window.

    Stops as soon as the accumulated window time reaches ``t_star`` (window
    closed) or the block is exhausted.  Per-arrival interarrivals and their
    gradients land in the out arrays.  Returns
    (n_consumed, w, gw, elapsed, regenerations, closed).
    """
    w = w0
    gw = gw0
    elapsed = elapsed0
    regen = 0
    n = 0
    closed = False
    for k in range(seeds.shape[0]):
        a, dp, dw, idle = _draw(code, th1, th2, lam, price, w, seeds[k])
        ga = dp + dw * gw
        if idle:
            w_pre = 0.0
        else:
            w_pre = w - a
            if w_pre < 0.0:
                w_pre = 0.0
        if w_pre == 0.0:
            gw = 0.0
            regen += 1
        else:
            gw = gw - ga
        w = w_pre + services[k]
        elapsed += a
        out_a[k] = a
        out_ga[k] = ga
        n += 1
        if elapsed >= t_star:
            closed = True
            break
    return n, w, gw, elapsed, regen, closed


@njit(cache=True)
def pinned_run(
    code: int,
    th1: float,
    th2: float,
    lam: float,
    price: float,
    w0: float,
    gw0: float,
    seeds: np.ndarray,
    services: np.ndarray,
):
    """Consume the full seed/service arrays at a pinned price.

    Returns (elapsed, w, gw, gw_min, gw_max, ga_min, ga_max, ga_sum): the
    carried workload and gradient, the extremes of the post-arrival workload
    gradient and of the interarrival gradient over the run, and the sum of
    interarrival gradients.
    """
    w = w0
    gw = gw0
    elapsed = 0.0
    gw_min = gw0
    gw_max = gw0
    ga_min = math.inf
    ga_max = -math.inf
    ga_sum = 0.0
    for k in range(seeds.shape[0]):
        a, dp, dw, idle = _draw(code, th1, th2, lam, price, w, seeds[k])
        ga = dp + dw * gw
        if idle:
            w_pre = 0.0
        else:
            w_pre = w - a
            if w_pre < 0.0:
                w_pre = 0.0
        gw = 0.0 if w_pre == 0.0 else gw - ga
        w = w_pre + services[k]
        elapsed += a
        ga_sum += ga
        if ga < ga_min:
            ga_min = ga
        if ga > ga_max:
            ga_max = ga
        if gw < gw_min:
            gw_min = gw
        if gw > gw_max:
            gw_max = gw
    return elapsed, w, gw, gw_min, gw_max, ga_min, ga_max, ga_sum
