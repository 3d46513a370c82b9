"""Markov simulation of a dynamic job population under fluid resource sharing.

The population vector changes by one job at a time: class ``k`` arrives at
rate ``lam_k`` and completes at rate ``n_k * phi_k * mu_k``, where ``phi_k``
is the per-job task volume of the current allocation.  Allocations are a
function of the population only, so they are computed once per visited
state.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Optional, Sequence

import numpy as np

from .alloc import SolverParams
from .analytic import capacity_region_check
from .errors import ConvergenceError, ValidationError
from .traffic import Allocator, Policy, SimResult, TrafficClass, class_matrix

_BLOCK = 1 << 14


def _check_window(horizon, warmup):
    if warmup is None:
        warmup = 0.1 * horizon
    if not (horizon > warmup >= 0):
        raise ValidationError("need horizon > warmup >= 0")
    return float(horizon), float(warmup)


def simulate_fluid(classes: Sequence[TrafficClass], policy, horizon: float,
                   warmup: Optional[float] = None, seed: int = 0,
                   params: Optional[SolverParams] = None) -> SimResult:
    """Simulate over ``[0, horizon]`` and time-average job counts over ``[warmup, horizon]``.

    ``gamma[k]`` is the service rate of class ``k`` normalized so that a
    job alone in the system is served at rate 1.
    """
    horizon, warmup = _check_window(horizon, warmup)
    policy = Policy.parse(policy)
    claimed = class_matrix(classes)
    true = class_matrix(classes, claimed=False)
    if (true.a > 1).any():
        raise ValidationError("fluid demands must be normalized to capacity 1")
    K = len(classes)
    lam = [c.lam for c in classes]
    mu = [c.mu for c in classes]
    lam_total = sum(lam)
    lam_cum = list(np.cumsum(lam))
    allocate = Allocator(claimed, policy, params)
    rng = np.random.default_rng(seed)

    rates = {}
    counts = [0] * K
    area = [0.0] * K
    t = 0.0
    events = 0
    exps = rng.standard_exponential(_BLOCK)
    unis = rng.random(_BLOCK)
    b = 0
    while True:
        key = tuple(counts)
        entry = rates.get(key)
        if entry is None:
            try:
                phi, _ = allocate(key)
            except ConvergenceError as exc:
                exc.time = t
                raise
            dep = [counts[k] * phi[k] * mu[k] for k in range(K)]
            cum = list(np.cumsum(dep))
            entry = (cum, lam_total + cum[-1])
            rates[key] = entry
        cum, total = entry
        if total <= 0:
            # no traffic at all
            break
        if b == _BLOCK:
            exps = rng.standard_exponential(_BLOCK)
            unis = rng.random(_BLOCK)
            b = 0
        t_next = t + exps[b] / total
        u = unis[b] * total
        b += 1
        lo = t if t > warmup else warmup
        hi = t_next if t_next < horizon else horizon
        if hi > lo:
            d = hi - lo
            for k in range(K):
                if counts[k]:
                    area[k] += counts[k] * d
        if t_next >= horizon:
            break
        t = t_next
        events += 1
        if u < lam_total:
            k = min(bisect_right(lam_cum, u), K - 1)
            counts[k] += 1
        else:
            k = min(bisect_right(cum, u - lam_total), K - 1)
            while counts[k] == 0:
                k -= 1
            counts[k] -= 1

    window = horizon - warmup
    mean_n = np.array(area) / window
    dom = true.dominant()
    rho = np.array([c.rho for c in classes])
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(rho > 0, rho * dom / mean_n, np.nan)
    _, stable = capacity_region_check(classes)
    return SimResult(mean_n, gamma, np.full(K, np.nan), horizon, events, int(seed), 1, stable)


def simulate_permanent_job(alpha: float, beta: float, rho2: float, policy="pf",
                           horizon: float = 1e5, warmup: Optional[float] = None, seed: int = 0,
                           params: Optional[SolverParams] = None) -> SimResult:
    """One permanent job with true profile ``(1, alpha)`` claiming ``(1, beta)``.

    Class-2 jobs of profile ``(alpha, 1)`` arrive at rate ``rho2`` with unit
    completion rate.  ``gamma[0]`` is the time average of the permanent
    job's task volume, ``gamma[1]`` the class-2 service rate.
    """
    horizon, warmup = _check_window(horizon, warmup)
    if not 0 < alpha < 1:
        raise ValidationError("alpha must lie in (0, 1)")
    if not alpha <= beta <= 1:
        raise ValidationError("beta must lie in [alpha, 1]")
    if not 0 <= rho2:
        raise ValidationError("rho2 must be non-negative")
    claimed = class_matrix([
        TrafficClass(0.0, 1, 1, (1.0, beta)),
        TrafficClass(rho2, 1, 1, (alpha, 1.0)),
    ])
    allocate = Allocator(claimed, policy, params)
    rng = np.random.default_rng(seed)

    rates = {}
    n = 0
    t = 0.0
    events = 0
    area_phi = 0.0
    area_n = 0.0
    exps = rng.standard_exponential(_BLOCK)
    unis = rng.random(_BLOCK)
    b = 0
    while True:
        entry = rates.get(n)
        if entry is None:
            try:
                phi, _ = allocate((1, n))
            except ConvergenceError as exc:
                exc.time = t
                raise
            entry = (float(phi[0]), n * float(phi[1]))
            rates[n] = entry
        phi1, death = entry
        total = rho2 + death
        if total <= 0:
            area_phi = phi1 * (horizon - warmup)
            break
        if b == _BLOCK:
            exps = rng.standard_exponential(_BLOCK)
            unis = rng.random(_BLOCK)
            b = 0
        t_next = t + exps[b] / total
        u = unis[b] * total
        b += 1
        lo = t if t > warmup else warmup
        hi = t_next if t_next < horizon else horizon
        if hi > lo:
            area_phi += phi1 * (hi - lo)
            area_n += n * (hi - lo)
        if t_next >= horizon:
            break
        t = t_next
        events += 1
        n += 1 if u < rho2 else -1

    window = horizon - warmup
    mean_n = area_n / window
    g2 = rho2 / mean_n if mean_n > 0 else np.nan
    return SimResult(np.array([1.0, mean_n]), np.array([area_phi / window, g2]),
                     np.full(2, np.nan), horizon, events, int(seed), 1, rho2 < 1)
