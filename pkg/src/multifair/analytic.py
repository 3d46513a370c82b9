"""Closed-form oracles for the dynamic two-class models and the task-based lone job."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .traffic import TrafficClass, class_matrix


@dataclass(frozen=True)
class TwoClassProfile:
    """Classes with task profiles ``(1, alpha)`` and ``(beta, 1)``."""

    alpha: float
    beta: float
    rho1: float = 0.0
    rho2: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= self.beta <= 1:
            raise ValidationError("profile requires 0 < alpha <= beta <= 1")
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValidationError("loads must be non-negative")

    @property
    def rows(self):
        return [(1.0, self.alpha), (self.beta, 1.0)]


@dataclass
class BirthDeathResult:
    pi: np.ndarray
    n_max: int
    tail_mass: float


def capacity_region_check(classes: Sequence[TrafficClass], capacity=None):
    """Per-resource loads ``sum_k rho_k a_kj`` (claimed rows) and whether all are < 1."""
    a = class_matrix(classes, capacity).a
    rho = np.array([c.rho for c in classes])
    loads = rho @ a
    return loads, bool((loads < 1).all())


def _policy_name(policy) -> str:
    name = str(getattr(policy, "kind", policy)).lower()
    if name not in ("drf", "pf"):
        raise ValidationError(f"no closed form for policy {policy!r}")
    return name


def light_traffic_gamma(profile: TwoClassProfile, policy):
    """Second-order light-traffic service rates ``(gamma1, gamma2)``."""
    a, b, r1, r2 = profile.alpha, profile.beta, profile.rho1, profile.rho2
    g1 = 1 - r1 - b * r2
    if _policy_name(policy) == "drf":
        return g1, 1 - b * r1 - r2
    return g1, 1 - max(2 - 1 / b, a) * r1 - r2


def heavy_traffic_gamma(profile: TwoClassProfile, policy):
    """Heavy-traffic service rates when resource 1 is the more loaded one."""
    a, b, r1, r2 = profile.alpha, profile.beta, profile.rho1, profile.rho2
    load1 = r1 + b * r2
    if not load1 > a * r1 + r2:
        raise ValidationError("resource 1 must carry the higher load")
    if _policy_name(policy) == "drf":
        return 1 - load1, 1 - load1
    return 1 - load1, (1 - load1) / a


def permanent_job_rate(n: int, alpha: float, beta: float) -> float:
    """PF task volume of a permanent ``(1, beta)`` job facing ``n`` jobs of profile ``(alpha, 1)``."""
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if not alpha <= beta <= 1:
        raise ValidationError("beta must lie in [alpha, 1]")
    if n < 0:
        raise ValidationError("n must be non-negative")
    if n == 0:
        return 1.0 / max(1.0, beta)
    return min((1 - alpha) / (1 - alpha * beta), 1.0 / (beta * (n + 1)))


def optimal_claim(n: int, alpha: float) -> float:
    """Claim ``beta`` maximizing the permanent job's volume against ``n`` competitors."""
    return 1.0 / (1 + n * (1 - alpha))


def birth_death_stationary(birth, death, n_max: int) -> np.ndarray:
    """Stationary law of a birth-death chain truncated at ``n_max`` (detailed balance)."""
    logw = np.zeros(n_max + 1)
    for n in range(1, n_max + 1):
        logw[n] = logw[n - 1] + math.log(birth(n - 1)) - math.log(death(n))
    w = np.exp(logw - logw.max())
    return w / w.sum()


def permanent_job_chain(alpha: float, beta: float, rho2: float, tail_tol: float = 1e-9,
                        n_start: int = 64) -> BirthDeathResult:
    """Class-2 population seen by the permanent job, with ``mu2 = 1``."""
    if not 0 <= rho2 < 1:
        raise ValidationError("the class-2 load must be below 1 for stability")
    if rho2 == 0:
        return BirthDeathResult(np.array([1.0]), 0, 0.0)

    def death(n):
        return 1 - beta * permanent_job_rate(n, alpha, beta)

    n_max = n_start
    while True:
        pi = birth_death_stationary(lambda n: rho2, death, n_max)
        # death rates are non-decreasing in n, so the tail is dominated by a geometric series
        r = rho2 / death(n_max + 1)
        tail = pi[-1] * r / (1 - r) if r < 1 else math.inf
        if tail < tail_tol:
            return BirthDeathResult(pi, n_max, tail)
        if n_max > 10_000_000:
            raise ValidationError("birth-death truncation did not reach the tail bound")
        n_max *= 2


def gamma1_pf(alpha: float, beta: float, rho2: float, tail_tol: float = 1e-9) -> float:
    """Mean PF service rate of the permanent job, ``sum_n pi(n) phi1(n)``."""
    chain = permanent_job_chain(alpha, beta, rho2, tail_tol)
    phi = np.array([permanent_job_rate(n, alpha, beta) for n in range(chain.n_max + 1)])
    return float(chain.pi @ phi)


def zero_load_ratio(sigma: int, C: int) -> float:
    """Fluid over task-based service time of a lone job with exponential tasks."""
    if C < 1 or sigma < C:
        raise ValidationError("zero-load ratio requires sigma >= C >= 1")
    harmonic = sum(1.0 / k for k in range(1, C))
    return (sigma / C) / ((sigma - C + 1) / C + harmonic)
