"""Traffic classes, sharing policies and replication statistics shared by the simulators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .alloc import (DemandMatrix, SolverParams, alpha_fair_allocate, drf_allocate,
                    maxmin_allocate, normalize_demands)
from .errors import ValidationError


@dataclass(frozen=True)
class TrafficClass:
    """A Poisson stream of jobs with identical per-task requirements.

    ``demand`` is the per-task requirement vector in the units of the
    capacities it is simulated against (normalized units for the fluid
    model).  ``claim`` is the requirement announced to the scheduler; it
    defaults to the true demand.
    """

    lam: float
    sigma: float
    tau: float
    demand: tuple
    claim: Optional[tuple] = None
    name: str = ""

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValidationError(f"class {self.name!r}: arrival rate must be non-negative")
        if not (self.sigma > 0 and self.tau > 0):
            raise ValidationError(f"class {self.name!r}: sigma and tau must be positive")
        object.__setattr__(self, "demand", tuple(float(x) for x in self.demand))
        if self.claim is not None:
            object.__setattr__(self, "claim", tuple(float(x) for x in self.claim))
            if len(self.claim) != len(self.demand):
                raise ValidationError(f"class {self.name!r}: claim and demand differ in length")
        for row in (self.demand, self.claim or self.demand):
            if any(x < 0 for x in row) or not any(x > 0 for x in row):
                raise ValidationError(f"class {self.name!r}: demand must be non-negative and non-zero")

    @property
    def mu(self) -> float:
        """Completion rate of a job holding one unit of task volume."""
        return 1.0 / (self.sigma * self.tau)

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def claimed(self) -> tuple:
        return self.claim if self.claim is not None else self.demand


def class_matrix(classes: Sequence[TrafficClass], capacity=None, claimed: bool = True) -> DemandMatrix:
    """Normalized demand matrix of ``classes`` (claimed rows by default)."""
    if not classes:
        raise ValidationError("at least one traffic class is required")
    J = len(classes[0].demand)
    if any(len(c.demand) != J for c in classes):
        raise ValidationError("all classes must list the same number of resources")
    rows = [c.claimed if claimed else c.demand for c in classes]
    return normalize_demands(rows, capacity if capacity is not None else [1] * J)


@dataclass(frozen=True)
class Policy:
    kind: str
    alpha: Optional[float] = None

    @classmethod
    def parse(cls, text) -> "Policy":
        if isinstance(text, Policy):
            return text
        t = str(text).strip().lower().replace(" ", "")
        if t in ("drf", "pf", "maxmin"):
            return cls(t)
        for prefix in ("alpha=", "alpha:", "alpha("):
            if t.startswith(prefix):
                try:
                    value = float(t[len(prefix):].rstrip(")"))
                except ValueError:
                    break
                if not value > 0:
                    break
                return cls("pf") if value == 1 else cls("alpha", value)
        raise ValidationError(f"unknown policy {text!r} (expected drf, pf or alpha=<value>)")

    def __str__(self):
        if self.kind == "alpha":
            return f"ALPHA({self.alpha:g})"
        return self.kind.upper()


DRF = Policy("drf")
PF = Policy("pf")


class Allocator:
    """Per-population allocation of a fixed set of classes, memoized by counts.

    Multiplier-based policies warm start from the previously solved state.
    """

    def __init__(self, demand: DemandMatrix, policy, params: Optional[SolverParams] = None,
                 tol: float = 1e-8):
        self.demand = demand
        self.policy = Policy.parse(policy)
        self.params = params or SolverParams()
        self.tol = tol
        self._cache = {}
        self._nu = None

    def __call__(self, counts: tuple):
        hit = self._cache.get(counts)
        if hit is not None:
            return hit
        kind = self.policy.kind
        nu = None
        if kind == "drf":
            alloc = drf_allocate(self.demand, counts, exact=False)
        elif kind == "maxmin":
            alloc = maxmin_allocate(self.demand, counts, exact=False)
        else:
            alpha = 1.0 if kind == "pf" else self.policy.alpha
            warm = self._nu if self._nu is not None and sum(counts) > 1 else None
            alloc, nu = alpha_fair_allocate(self.demand, alpha, self.params, counts, warm)
            if sum(counts) > 1:
                self._nu = nu
        if (alloc.usage > 1.0 + self.tol).any():
            raise AssertionError(f"capacity violated in state {counts}: usage {alloc.usage}")
        self._cache[counts] = (alloc.phi, nu)
        return alloc.phi, nu


@dataclass
class SimResult:
    """Per-class metrics of one run, or of several merged replications."""

    mean_n: np.ndarray
    gamma: np.ndarray
    ci: np.ndarray
    sim_time: float
    events: int
    seed: int
    reps: int = 1
    stable: bool = True
    per_rep: Optional[np.ndarray] = field(default=None, repr=False)


def half_width(samples, level: float = 0.95) -> np.ndarray:
    """Student-t confidence half-width of the mean along the first axis."""
    x = np.asarray(samples, dtype=float)
    r = x.shape[0]
    if r < 2:
        return np.full(x.shape[1:], np.nan)
    q = stats.t.ppf(0.5 + level / 2, r - 1)
    return q * x.std(axis=0, ddof=1) / math.sqrt(r)


def merge_results(results: Sequence[SimResult], seed: int, level: float = 0.95) -> SimResult:
    """Average replications; the half-width is taken over per-replication rates."""
    g = np.array([r.gamma for r in results])
    n = np.array([r.mean_n for r in results])
    return SimResult(
        mean_n=n.mean(axis=0),
        gamma=g.mean(axis=0),
        ci=half_width(g, level),
        sim_time=float(sum(r.sim_time for r in results)),
        events=int(sum(r.events for r in results)),
        seed=seed,
        reps=len(results),
        stable=all(r.stable for r in results),
        per_rep=g,
    )


def replication_seed(master: int, *key: int) -> int:
    """Seed of one replication, derived from the master seed and a key."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1)[0])


def replicate(run: Callable[[int], SimResult], master: int, reps: int, key=(), workers: int = 1) -> SimResult:
    """Run ``reps`` independent replications of ``run(seed)`` and merge them.

    Results are merged in replication order whatever the completion order.
    """
    if reps < 1:
        raise ValidationError("replications must be >= 1")
    seeds = [replication_seed(master, *key, r) for r in range(reps)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(s) for s in seeds]
    return merge_results(results, master)
