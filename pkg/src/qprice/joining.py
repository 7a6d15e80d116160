"""Joining-probability families and the effective-interarrival law.

A potential customer who sees admission price ``p`` and a prospective wait
``v`` joins with probability ``h(p, v)`` and balks otherwise.  Potential
customers arrive as a Poisson stream with rate ``lambda_max``, so the time
until the next *effective* arrival, given workload ``w`` just after the
previous one, is a thinned-Poisson first-event time with CDF

    F(ell) = 1 - exp(-lambda_max * J(ell)),
    J(ell) = integral_0^ell h(p, (w - t)+) dt.

Because the workload drains linearly and freezes at zero, ``J`` is smooth up
to ``ell = w`` (the "busy" branch, arrival lands before the server idles) and
exactly linear beyond it (the "idle" branch, the server has drained and the
remaining wait is zero).  Every law here exposes the CDF, its inverse in the
uniform seed, and the two partial derivatives of the inverse that drive the
pathwise gradient recursion: d(inverse)/d(price) and d(inverse)/d(workload),
both taken at a fixed seed.

Two families have closed forms:

* ``ExponentialJoining``: h(p, v) = exp(-theta1*p - theta2*v)
* ``PolynomialJoining``:  h(p, v) = 1 / (1 + theta1*p**2 + theta2*v**2)

``NumericJoining`` accepts an arbitrary joining probability and falls back on
adaptive quadrature for ``J`` and bracketed root finding for the inverse; its
partials come from implicit differentiation of ``J`` (see the functions for
details), which is far more accurate than differencing the root-found inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from scipy import integrate, optimize

__all__ = [
    "JoiningModel",
    "ExponentialJoining",
    "PolynomialJoining",
    "NumericJoining",
    "InterarrivalLaw",
    "xi_moment_bound",
    "contraction_factor_bound",
]

_EPS = 2.220446049250313e-16


def _softplus(x: float) -> float:
    """log(1 + exp(x)) without overflow at either extreme."""
    if x > 35.0:
        return x + math.exp(-x)
    if x < -35.0:
        return math.exp(x)
    return math.log1p(math.exp(x))


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _check_price(price: float) -> None:
    if price < 0.0 or not math.isfinite(price):
        raise ValueError(f"price must be finite and >= 0, got {price}")


@dataclass(frozen=True)
class JoiningModel:
    """Base class: parameters shared by every joining-probability family.

    theta1 scales the price term, theta2 the congestion term, and
    lambda_max is the Poisson rate of potential arrivals.
    """

    theta1: float
    theta2: float
    lambda_max: float

    family = "abstract"

    def __post_init__(self) -> None:
        for name in ("theta1", "theta2", "lambda_max"):
            v = getattr(self, name)
            if not (v > 0.0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    # -- joining probability ------------------------------------------------

    def h(self, price: float, wait: float) -> float:
        """Probability that a customer facing (price, wait) joins."""
        raise NotImplementedError

    # -- interarrival law ---------------------------------------------------

    def cdf_at_workload(self, price: float, w: float) -> float:
        """F(w; w): probability the next effective arrival lands before the
        server drains the current workload.  Seeds below this value select
        the busy branch, seeds at or above it the idle branch."""
        raise NotImplementedError

    def cdf(self, price: float, w: float, ell: float) -> float:
        raise NotImplementedError

    def inverse_with_partials(
        self, price: float, w: float, seed: float
    ) -> tuple[float, float, float, bool]:
        """Invert the CDF at ``seed`` and differentiate the inverse.

        Returns ``(ell, d_price, d_workload, idle)`` where ``ell`` solves
        F(ell) = seed, the partials are taken at fixed seed and fixed
        other coordinate, and ``idle`` flags the branch (ties at the branch
        point go to the idle branch).
        """
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialJoining(JoiningModel):
    """h(p, v) = exp(-theta1*p - theta2*v).

    All interarrival quantities are closed-form.  The busy branch is driven
    by the single stable quantity

        x = theta1*p + theta2*w + log(theta2 * (-log(1-seed)) / lambda_max),

    in terms of which ell = softplus(x)/theta2, d(ell)/dw = sigmoid(x) and
    d(ell)/dp = (theta1/theta2) * sigmoid(x); this form survives the large
    theta1*p + theta2*w regime that plain exponentials do not.
    """

    family = "exponential"

    def h(self, price: float, wait: float) -> float:
        _check_price(price)
        if wait < 0.0:
            raise ValueError(f"wait must be >= 0, got {wait}")
        return math.exp(-self.theta1 * price - self.theta2 * wait)

    def cdf_at_workload(self, price: float, w: float) -> float:
        t1, t2, lam = self.theta1, self.theta2, self.lambda_max
        j = (lam / t2) * math.exp(-t1 * price) * (-math.expm1(-t2 * w))
        return -math.expm1(-j)

    def cdf(self, price: float, w: float, ell: float) -> float:
        t1, t2, lam = self.theta1, self.theta2, self.lambda_max
        if ell < w:
            # exp(-t2*(w-ell)) - exp(-t2*w) stays in [0, 1]: no overflow
            j = (lam / t2) * math.exp(-t1 * price) * (
                math.exp(-t2 * (w - ell)) - math.exp(-t2 * w)
            )
        else:
            j = lam * math.exp(-t1 * price) * (
                -math.expm1(-t2 * w) / t2 + (ell - w)
            )
        return -math.expm1(-j)

    def inverse_with_partials(
        self, price: float, w: float, seed: float
    ) -> tuple[float, float, float, bool]:
        t1, t2, lam = self.theta1, self.theta2, self.lambda_max
        log1m = math.log1p(-seed)
        if seed < self.cdf_at_workload(price, w):
            x = t1 * price + t2 * w + math.log(-log1m * t2 / lam)
            sig = _sigmoid(x)
            return _softplus(x) / t2, (t1 / t2) * sig, sig, False
        ell = w + math.expm1(-t2 * w) / t2 - math.exp(t1 * price) * log1m / lam
        d_price = -(t1 / lam) * math.exp(t1 * price) * log1m
        d_workload = -math.expm1(-t2 * w)
        return ell, d_price, d_workload, True


@dataclass(frozen=True)
class PolynomialJoining(JoiningModel):
    """h(p, v) = 1 / (1 + theta1*p**2 + theta2*v**2).

    With a = 1 + theta1*p**2, s = sqrt(theta2), q = sqrt(a), the busy branch
    integrates to an arctan and inverts through a tangent:

        J(ell)  = (arctan(s*w/q) - arctan(s*(w-ell)/q)) / (s*q),   ell < w
        inverse = w - (q/s) * tan(theta),
        theta   = arctan(s*w/q) + (s*q/lambda_max) * log(1-seed),

    and the idle branch is linear in the seed's exponential deviate.  The
    branch condition seed < F(w; w) pins theta into (0, arctan(s*w/q)), so
    the tangent never approaches its pole.
    """

    family = "polynomial"

    def h(self, price: float, wait: float) -> float:
        _check_price(price)
        if wait < 0.0:
            raise ValueError(f"wait must be >= 0, got {wait}")
        return 1.0 / (1.0 + self.theta1 * price * price + self.theta2 * wait * wait)

    def cdf_at_workload(self, price: float, w: float) -> float:
        s = math.sqrt(self.theta2)
        q = math.sqrt(1.0 + self.theta1 * price * price)
        return -math.expm1(-(self.lambda_max / (s * q)) * math.atan(s * w / q))

    def cdf(self, price: float, w: float, ell: float) -> float:
        lam = self.lambda_max
        a = 1.0 + self.theta1 * price * price
        s = math.sqrt(self.theta2)
        q = math.sqrt(a)
        if ell < w:
            j = (math.atan(s * w / q) - math.atan(s * (w - ell) / q)) / (s * q)
        else:
            j = math.atan(s * w / q) / (s * q) + (ell - w) / a
        return -math.expm1(-lam * j)

    def inverse_with_partials(
        self, price: float, w: float, seed: float
    ) -> tuple[float, float, float, bool]:
        t1, t2, lam = self.theta1, self.theta2, self.lambda_max
        a = 1.0 + t1 * price * price
        s = math.sqrt(t2)
        q = math.sqrt(a)
        log1m = math.log1p(-seed)
        atan_w = math.atan(s * w / q)
        denom = a + t2 * w * w
        if seed < self.cdf_at_workload(price, w):
            theta = atan_w + (s * q / lam) * log1m
            tan_t = math.tan(theta)
            sec2 = 1.0 + tan_t * tan_t
            ell = w - (q / s) * tan_t
            d_price = (
                -(t1 * price / (s * q)) * tan_t
                + sec2 * (t1 * price * w / denom - (t1 * price / lam) * log1m)
            )
            d_workload = 1.0 - sec2 * a / denom
            return ell, d_price, d_workload, False
        ell = w - (a / lam) * log1m - (q / s) * atan_w
        d_price = (
            -(2.0 * t1 * price / lam) * log1m
            + t1 * price * w / denom
            - (t1 * price / (s * q)) * atan_w
        )
        d_workload = t2 * w * w / denom
        return ell, d_price, d_workload, True


@dataclass(frozen=True)
class NumericJoining(JoiningModel):
    """Arbitrary joining probability, handled numerically.

    ``joining_prob`` must map (price, wait) into [0, 1] and be smooth enough
    for quadrature.  ``J`` is evaluated by adaptive quadrature on [0, min(ell,
    w)] plus the exact linear idle tail (the wait is identically zero past
    ``w``), and the inverse by bisection-safeguarded Brent iteration on the
    busy segment or the exact linear formula on the idle one.

    The partials of the inverse use implicit differentiation of
    J(ell; p, w) = -log(1-seed)/lambda_max at fixed seed:

        d(ell)/dw = 1 - h(p, w) / h(p, (w-ell)+)
        d(ell)/dp = -(dJ/dp) / h(p, (w-ell)+)

    with dJ/dp quadratured from a central difference of ``joining_prob`` in
    the price.  Differencing the root-found inverse directly would bottom out
    near quad_tol/step, about two orders of magnitude worse than this.
    """

    joining_prob: Callable[[float, float], float] = field(default=None, repr=False)  # type: ignore[assignment]
    quad_tol: float = 1e-12
    fd_step: float = 1e-6

    family = "generic"

    def __post_init__(self) -> None:
        super().__post_init__()
        if self.joining_prob is None:
            raise ValueError("NumericJoining requires a joining_prob callable")

    def h(self, price: float, wait: float) -> float:
        _check_price(price)
        if wait < 0.0:
            raise ValueError(f"wait must be >= 0, got {wait}")
        v = float(self.joining_prob(price, wait))
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"joining_prob({price}, {wait}) = {v} outside [0, 1]")
        return v

    def _quad(self, f: Callable[[float], float], lo: float, hi: float) -> float:
        if hi <= lo:
            return 0.0
        val, err = integrate.quad(f, lo, hi, epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
        if err > max(1e3 * self.quad_tol, 1e-9 * abs(val)):
            raise RuntimeError(
                f"quadrature did not converge: achieved abs error {err:.3e} "
                f"on [{lo}, {hi}] (tolerance {self.quad_tol:.1e})"
            )
        return val

    def _j(self, price: float, w: float, ell: float) -> float:
        busy = self._quad(lambda t: self.joining_prob(price, w - t), 0.0, min(ell, w))
        if ell > w:
            return busy + (ell - w) * self.joining_prob(price, 0.0)
        return busy

    def cdf_at_workload(self, price: float, w: float) -> float:
        return -math.expm1(-self.lambda_max * self._j(price, w, w))

    def cdf(self, price: float, w: float, ell: float) -> float:
        return -math.expm1(-self.lambda_max * self._j(price, w, ell))

    def inverse_with_partials(
        self, price: float, w: float, seed: float
    ) -> tuple[float, float, float, bool]:
        target = -math.log1p(-seed) / self.lambda_max
        j_w = self._j(price, w, w)
        if target >= j_w:
            h0 = self.joining_prob(price, 0.0)
            if h0 <= 0.0:
                raise ValueError("joining_prob(price, 0) must be positive to cross an idle period")
            ell = w + (target - j_w) / h0
            idle = True
        else:
            ell = optimize.brentq(
                lambda x: self._j(price, w, x) - target,
                0.0,
                w,
                xtol=1e-13,
                rtol=4.0 * _EPS,
            )
            idle = False
        h_at = self.joining_prob(price, max(w - ell, 0.0))
        d_workload = 1.0 - self.joining_prob(price, w) / h_at
        step = self.fd_step * max(1.0, abs(price))
        p_lo = max(price - step, 0.0)
        p_hi = price + step

        def dh_dp(t: float) -> float:
            v = w - t if t < w else 0.0
            return (self.joining_prob(p_hi, v) - self.joining_prob(p_lo, v)) / (p_hi - p_lo)

        dj_dp = self._quad(dh_dp, 0.0, min(ell, w))
        if ell > w:
            dj_dp += (ell - w) * dh_dp(w)
        d_price = -dj_dp / h_at
        return ell, d_price, d_workload, idle


@dataclass(frozen=True)
class InterarrivalLaw:
    """The effective-interarrival distribution at one (price, workload) point.

    ``initial_workload`` is the workload left just after the previous
    effective arrival.  The law is strictly increasing and continuous on
    [0, inf) with cdf(0) = 0.
    """

    model: JoiningModel
    price: float
    initial_workload: float

    def __post_init__(self) -> None:
        _check_price(self.price)
        if self.initial_workload < 0.0:
            raise ValueError(f"initial_workload must be >= 0, got {self.initial_workload}")

    def cdf(self, ell: float) -> float:
        if ell < 0.0:
            raise ValueError(f"ell must be >= 0, got {ell}")
        return self.model.cdf(self.price, self.initial_workload, ell)

    def branch_point(self) -> float:
        """Seed value separating the busy branch from the idle branch."""
        return self.model.cdf_at_workload(self.price, self.initial_workload)

    def _seeded(self, seed: float) -> tuple[float, float, float, bool]:
        if not (0.0 < seed < 1.0):
            raise ValueError(f"seed must lie strictly inside (0, 1), got {seed}")
        return self.model.inverse_with_partials(self.price, self.initial_workload, seed)

    def inverse_cdf(self, seed: float) -> float:
        return self._seeded(seed)[0]

    def partial_p_inverse(self, seed: float) -> float:
        """d(inverse_cdf)/d(price) at fixed seed and fixed workload."""
        return self._seeded(seed)[1]

    def partial_w_inverse(self, seed: float) -> float:
        """d(inverse_cdf)/d(workload) at fixed seed and fixed price."""
        return self._seeded(seed)[2]


def contraction_factor_bound(rate: float, m: int, tol: float = 1e-12) -> float:
    """Upper bound on the m-th moment of the per-step workload-coupling
    contraction factor, as a function of rate = lambda_max*exp(-theta1*p)/theta2.

    Evaluates rate * e^rate * E_m(rate) + e^(-rate) with
    E_m(t) = integral_1^2 exp(-t*x)/x**m dx.  The product is computed as
    rate * integral_1^2 exp(-t*(x-1))/x**m dx so nothing overflows for large
    rates.  Strictly below 1 for every rate > 0 and nonincreasing in m.
    """
    if rate <= 0.0:
        raise ValueError(f"rate must be positive, got {rate}")
    if m < 1:
        raise ValueError(f"m must be a positive integer, got {m}")
    val, err = integrate.quad(
        lambda x: math.exp(-rate * (x - 1.0)) / x**m, 1.0, 2.0, epsabs=tol, epsrel=tol
    )
    if err > 1e3 * tol:
        raise RuntimeError(f"quadrature did not converge: achieved abs error {err:.3e}")
    return rate * val + math.exp(-rate)


def xi_moment_bound(model: JoiningModel, price: float, m: int) -> float:
    """Moment bound for the coupling contraction factor of ``model`` at ``price``.

    Only defined for the exponential joining family, whose contraction
    factor has the closed envelope used by ``contraction_factor_bound``.
    """
    if model.family != "exponential":
        raise ValueError(f"xi_moment_bound supports only the exponential family, got {model.family!r}")
    _check_price(price)
    rate = (model.lambda_max / model.theta2) * math.exp(-model.theta1 * price)
    return contraction_factor_bound(rate, m)
