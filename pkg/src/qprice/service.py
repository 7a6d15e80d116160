"""Service-requirement distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["ServiceDistribution", "Exponential", "Gamma", "Deterministic", "make_service"]


@dataclass(frozen=True)
class ServiceDistribution:
    kind = "abstract"

    def mean(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ServiceDistribution):
    rate: float

    kind = "exponential"

    def __post_init__(self) -> None:
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    def mean(self) -> float:
        return 1.0 / self.rate

    def sample(self, rng: np.random.Generator) -> float:
        return rng.exponential(1.0 / self.rate)

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.exponential(1.0 / self.rate, n)


@dataclass(frozen=True)
class Gamma(ServiceDistribution):
    """Gamma with shape/rate parameterization: mean shape/rate, variance shape/rate**2.

    numpy's gamma sampler takes a scale argument and is exact for shape < 1,
    which the heavy-variance experiment configurations rely on.
    """

    shape: float
    rate: float

    kind = "gamma"

    def __post_init__(self) -> None:
        if not (self.shape > 0.0 and math.isfinite(self.shape)):
            raise ValueError(f"shape must be positive, got {self.shape}")
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    def mean(self) -> float:
        return self.shape / self.rate

    def sample(self, rng: np.random.Generator) -> float:
        return rng.gamma(self.shape, 1.0 / self.rate)

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, n)


@dataclass(frozen=True)
class Deterministic(ServiceDistribution):
    value: float

    kind = "deterministic"

    def __post_init__(self) -> None:
        if not (self.value >= 0.0 and math.isfinite(self.value)):
            raise ValueError(f"value must be >= 0, got {self.value}")

    def mean(self) -> float:
        return self.value

    def sample(self, rng: np.random.Generator) -> float:
        return self.value

    def sample_many(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.full(n, self.value)


def make_service(kind: str, **params: float) -> ServiceDistribution:
    """Build a service distribution from config-style fields."""
    kind = kind.lower()
    if kind == "exponential":
        return Exponential(rate=params["rate"])
    if kind == "gamma":
        return Gamma(shape=params["shape"], rate=params["rate"])
    if kind == "deterministic":
        return Deterministic(value=params["value"])
    raise ValueError(f"unknown service kind {kind!r}")
