"""Mean-parameterised sampling distributions for the discrete simulator.

Only the means of service and switchover times enter the fluid model, so the
simulator accepts any nonnegative distribution with a prescribed mean.  All
samplers here are parameterised by that mean directly; shape parameters, where
they exist, are dimensionless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import InfeasibleParameters, SystemParameters


@dataclass(frozen=True)
class Distribution:
    """Base class: nonnegative distribution with known mean."""

    mean: float

    def sample(self, gen: np.random.Generator, size: int | None = None):
        raise NotImplementedError


@dataclass(frozen=True)
class Deterministic(Distribution):
    """Point mass at ``mean``.  Consumes no randomness."""

    def sample(self, gen: np.random.Generator, size: int | None = None):
        if size is None:
            return self.mean
        return np.full(size, self.mean)


@dataclass(frozen=True)
class Exponential(Distribution):
    def sample(self, gen: np.random.Generator, size: int | None = None):
        return gen.exponential(self.mean, size)


@dataclass(frozen=True)
class Gamma(Distribution):
    """Gamma with given mean and shape; variance = mean^2 / shape."""

    shape: float = 2.0

    def sample(self, gen: np.random.Generator, size: int | None = None):
        return gen.gamma(self.shape, self.mean / self.shape, size)


@dataclass(frozen=True)
class LogNormal(Distribution):
    """Lognormal with given mean and coefficient of variation."""

    cv: float = 1.0

    def sample(self, gen: np.random.Generator, size: int | None = None):
        log_var = math.log1p(self.cv**2)
        mu = math.log(self.mean) - 0.5 * log_var
        return gen.lognormal(mu, math.sqrt(log_var), size)


@dataclass(frozen=True)
class Uniform(Distribution):
    """Uniform on [mean*(1-width), mean*(1+width)], width in (0, 1]."""

    width: float = 1.0

    def sample(self, gen: np.random.Generator, size: int | None = None):
        half = self.mean * self.width
        return gen.uniform(self.mean - half, self.mean + half, size)


_KINDS = {
    "deterministic": Deterministic,
    "exponential": Exponential,
    "gamma": Gamma,
    "lognormal": LogNormal,
    "uniform": Uniform,
}


def make_distribution(kind: str, mean: float, **options: float) -> Distribution:
    """Build a distribution by name.  A zero mean always degenerates to a
    point mass at zero regardless of ``kind``."""
    if kind not in _KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    if mean < 0.0:
        raise ValueError("distribution mean must be nonnegative")
    if mean == 0.0:
        return Deterministic(0.0)
    return _KINDS[kind](mean, **options)


@dataclass(frozen=True)
class ScaledSystem:
    """A concrete system at scale ``n``.

    Arrival rates stay fixed while switchover means are inflated to
    ``n * s_i``; queue lengths divided by ``n`` and time divided by ``n``
    then approach the fluid dynamics as ``n`` grows.
    """

    params: SystemParameters
    scale: int
    service: tuple[Distribution, ...]
    switchover: tuple[Distribution, ...]

    def __post_init__(self) -> None:
        if self.scale < 1:
            raise InfeasibleParameters("scale must be a positive integer")
        if len(self.service) != self.params.num_queues:
            raise InfeasibleParameters("one service distribution per queue")
        if len(self.switchover) != self.params.num_stages:
            raise InfeasibleParameters("one switchover distribution per stage")
        for k, dist in enumerate(self.service):
            target = 1.0 / self.params.service_rates[k]
            if not math.isclose(dist.mean, target, rel_tol=1e-12):
                raise InfeasibleParameters(
                    f"service mean for queue {k} must equal 1/mu"
                )
        for i, dist in enumerate(self.switchover):
            target = self.scale * self.params.switchover_means[i]
            if not math.isclose(dist.mean, target, rel_tol=1e-12, abs_tol=0.0):
                raise InfeasibleParameters(
                    f"switchover mean for stage {i} must equal scale * s_i"
                )


def scaled_system(
    params: SystemParameters,
    scale: int,
    service_kind: str = "exponential",
    switchover_kind: str = "deterministic",
    service_options: dict[str, float] | None = None,
    switchover_options: dict[str, float] | None = None,
) -> ScaledSystem:
    """Assemble a ``ScaledSystem`` with homogeneous distribution families."""
    service = tuple(
        make_distribution(service_kind, 1.0 / mu, **(service_options or {}))
        for mu in params.service_rates
    )
    switchover = tuple(
        make_distribution(switchover_kind, scale * s, **(switchover_options or {}))
        for s in params.switchover_means
    )
    return ScaledSystem(params, scale, service, switchover)
