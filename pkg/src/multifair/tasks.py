"""Discrete-event simulation with integer tasks and a "serve the most deprived job" scheduler.

Whenever resources may have been freed (arrival or task completion) the
scheduler repeatedly picks the most deprived job that still has queued
tasks and launches one of them.  If that task does not fit, nothing is
launched until the state changes: there is no backfilling.

Resource usage is tracked in integers: all per-task requirements and
capacities are scaled by their common denominator.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .alloc import DemandMatrix, SolverParams
from .analytic import capacity_region_check
from .errors import ConvergenceError, ValidationError
from .traffic import Allocator, Policy, SimResult, TrafficClass

_BLOCK = 1 << 14


@dataclass(frozen=True)
class TaskDistribution:
    """Shape of per-task service times; the mean comes from each class's ``tau``."""

    kind: str = "exponential"
    k: int = 1

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("exponential", "erlang"):
            raise ValidationError(f"unknown task distribution {self.kind!r}")
        if self.k < 1:
            raise ValidationError("erlang order must be >= 1")
        object.__setattr__(self, "kind", kind)
        if kind == "exponential":
            object.__setattr__(self, "k", 1)

    @classmethod
    def erlang(cls, k: int) -> "TaskDistribution":
        return cls("erlang", k)

    def unit_samples(self, rng, size) -> np.ndarray:
        """Unit-mean service times."""
        if self.k == 1:
            return rng.standard_exponential(size)
        return rng.gamma(self.k, 1.0 / self.k, size)

    def __str__(self):
        return "exponential" if self.k == 1 else f"erlang-{self.k}"


@dataclass
class TaskJob:
    id: int
    cls: int
    queued: int
    running: int
    demand: tuple
    seq: int = 0
    arrival: float = 0.0
    completed: int = 0


def deprivation(job: TaskJob, policy, nu=None) -> float:
    """Deprivation index of ``job``; ``job.demand`` holds normalized requirements."""
    policy = Policy.parse(policy)
    if policy.kind == "drf":
        return job.running * max(job.demand)
    if nu is None:
        raise ValidationError("multipliers are required for the PF index")
    return job.running * float(np.dot(job.demand, nu))


def most_deprived(jobs: Sequence[TaskJob], policy, nu=None) -> int:
    """Id of the job with the smallest index; ties go to the earliest arrival, then lowest id."""
    if not jobs:
        raise ValidationError("no job to choose from")
    policy = Policy.parse(policy)
    best = min(jobs, key=lambda j: (deprivation(j, policy, nu), j.seq, j.id))
    return best.id


def _scaled_integers(values):
    fr = [Fraction(repr(float(v))) if not isinstance(v, (int, Fraction)) else Fraction(v) for v in values]
    d = 1
    for f in fr:
        d = d * f.denominator // math.gcd(d, f.denominator)
    return [int(f * d) for f in fr], d


class TaskSimulator:
    """Event loop shared by :func:`simulate_tasks` and the lone-job helpers."""

    def __init__(self, classes: Sequence[TrafficClass], capacity, policy,
                 dist: TaskDistribution, seed: int = 0, params: Optional[SolverParams] = None,
                 geometric_tasks: bool = False):
        if not classes:
            raise ValidationError("at least one traffic class is required")
        J = len(capacity)
        if J < 1 or any(c <= 0 for c in capacity):
            raise ValidationError("capacity must be strictly positive")
        for c in classes:
            if len(c.claimed) != J:
                raise ValidationError(f"class {c.name!r} does not match the capacity vector")
            if any(x > cap for x, cap in zip(c.claimed, capacity)):
                raise ValidationError(f"class {c.name!r}: a task needs more than the whole capacity")
        flat, _ = _scaled_integers([x for c in classes for x in c.claimed] + list(capacity))
        K = len(classes)
        self.int_demand = [flat[k * J:(k + 1) * J] for k in range(K)]
        self.int_cap = flat[K * J:]
        self.norm = DemandMatrix([[Fraction(repr(float(x))) / Fraction(repr(float(cap)))
                                   for x, cap in zip(c.claimed, capacity)] for c in classes], J)
        self.classes = list(classes)
        self.policy = Policy.parse(policy)
        if self.policy.kind not in ("drf", "pf"):
            raise ValidationError("the task scheduler supports DRF and PF only")
        self.dist = dist
        self.rng = np.random.default_rng(seed)
        self.allocate = Allocator(self.norm, "pf", params) if self.policy.kind == "pf" else None
        self.dominant = list(self.norm.dominant())
        self.geometric = geometric_tasks
        self.K, self.J = K, J

        self.t = 0.0
        self.usage = [0] * J
        self.jobs = {}
        self.counts = [0] * K
        self.heap = []
        self.next_id = 0
        self.events = 0
        self.weight = list(self.dominant)
        self._svc = self.dist.unit_samples(self.rng, _BLOCK)
        self._b = 0
        self.on_change = None

    def _service(self, k):
        if self._b == _BLOCK:
            self._svc = self.dist.unit_samples(self.rng, _BLOCK)
            self._b = 0
        x = self._svc[self._b]
        self._b += 1
        return x * self.classes[k].tau

    def _tasks_for(self, k):
        sigma = self.classes[k].sigma
        if self.geometric:
            return int(self.rng.geometric(1.0 / sigma))
        return max(1, int(round(sigma)))

    def _reweight(self):
        if self.allocate is None:
            return
        key = tuple(self.counts)
        if sum(key) == 0:
            return
        try:
            _, nu = self.allocate(key)
        except ConvergenceError as exc:
            exc.time = self.t
            raise
        a = self.norm.a
        self.weight = [float(a[k] @ nu) for k in range(self.K)]

    def add_job(self, k, tasks=None):
        tasks = self._tasks_for(k) if tasks is None else tasks
        job = TaskJob(self.next_id, k, tasks, 0, tuple(self.norm.a[k]), self.next_id, self.t)
        self.jobs[job.id] = job
        self.next_id += 1
        self.counts[k] += 1
        self._reweight()
        return job

    def schedule(self):
        """Launch tasks of the most deprived job for as long as they fit."""
        usage, cap, weight = self.usage, self.int_cap, self.weight
        J = self.J
        while True:
            best = None
            best_key = None
            for job in self.jobs.values():
                if job.queued:
                    key = job.running * weight[job.cls]
                    if best is None or key < best_key:
                        best, best_key = job, key
            if best is None:
                return
            dem = self.int_demand[best.cls]
            for j in range(J):
                if usage[j] + dem[j] > cap[j]:
                    return
            for j in range(J):
                usage[j] += dem[j]
            best.queued -= 1
            best.running += 1
            heapq.heappush(self.heap, (self.t + self._service(best.cls), self.events, best.id))
            self.events += 1
            if self.on_change is not None:
                self.on_change(self)

    def complete_next(self):
        """Finish the earliest running task; returns the job if it left the system."""
        t, _, jid = heapq.heappop(self.heap)
        self.t = t
        job = self.jobs[jid]
        job.running -= 1
        job.completed += 1
        dem = self.int_demand[job.cls]
        for j in range(self.J):
            self.usage[j] -= dem[j]
        if self.on_change is not None:
            self.on_change(self)
        if job.running == 0 and job.queued == 0:
            del self.jobs[jid]
            self.counts[job.cls] -= 1
            self._reweight()
            return job
        return None


def simulate_tasks(classes: Sequence[TrafficClass], capacity, policy,
                   dist: TaskDistribution = TaskDistribution(), horizon: float = 1000.0,
                   warmup: Optional[float] = None, seed: int = 0,
                   params: Optional[SolverParams] = None, geometric_tasks: bool = False) -> SimResult:
    """Simulate the task-granular cluster and return per-class service rates.

    ``classes[k].demand`` is in the units of ``capacity``.  Service rates
    are normalized by the fluid completion rate of a job alone in the
    system, so that the fluid model would give 1 at zero load.
    """
    if warmup is None:
        warmup = 0.1 * horizon
    if not horizon > warmup >= 0:
        raise ValidationError("need horizon > warmup >= 0")
    sim = TaskSimulator(classes, capacity, policy, dist, seed, params, geometric_tasks)
    rng = sim.rng
    K = sim.K
    lam = [c.lam for c in classes]
    lam_total = sum(lam)
    lam_cum = np.cumsum(lam)
    next_arrival = rng.exponential(1.0 / lam_total) if lam_total > 0 else math.inf
    area = [0.0] * K
    last = 0.0

    def advance(t_new):
        nonlocal last
        lo = max(last, warmup)
        hi = min(t_new, horizon)
        if hi > lo:
            for k in range(K):
                area[k] += sim.counts[k] * (hi - lo)
        last = t_new

    while True:
        t_done = sim.heap[0][0] if sim.heap else math.inf
        t_next = min(next_arrival, t_done)
        if t_next >= horizon:
            advance(horizon)
            break
        advance(t_next)
        if next_arrival <= t_done:
            sim.t = next_arrival
            k = int(np.searchsorted(lam_cum, rng.random() * lam_total, side="right"))
            sim.add_job(min(k, K - 1))
            next_arrival = sim.t + rng.exponential(1.0 / lam_total)
        else:
            sim.complete_next()
        sim.events += 1
        sim.schedule()

    window = horizon - warmup
    mean_n = np.array(area) / window
    rho = np.array([c.rho for c in classes])
    dom = np.array(sim.dominant)
    with np.errstate(divide="ignore", invalid="ignore"):
        gamma = np.where(rho > 0, rho * dom / mean_n, np.nan)
    _, stable = capacity_region_check(classes, capacity)
    return SimResult(mean_n, gamma, np.full(K, np.nan), horizon, sim.events, int(seed), 1, stable)


def lone_job_time(cls: TrafficClass, capacity, dist: TaskDistribution, seed: int = 0,
                  trace: bool = False):
    """Completion time of a single job in an empty cluster.

    With ``trace=True`` also returns the number of running tasks after each
    completion.
    """
    sim = TaskSimulator([cls], capacity, "drf", dist, seed)
    sim.add_job(0)
    sim.schedule()
    profile = [sim.jobs[0].running]
    while sim.heap:
        left = sim.complete_next()
        sim.schedule()
        if trace:
            profile.append(sim.jobs[0].running if left is None else 0)
    return (sim.t, profile) if trace else sim.t


def lone_job_rate(cls: TrafficClass, capacity, dist: TaskDistribution, reps: int = 1000,
                  seed: int = 0):
    """Zero-load normalized service rate: fluid lone-job time over mean task-based time.

    Returns ``(rate, half_width)`` with a delta-method 95% half-width.
    """
    from .traffic import half_width, replication_seed
    times = np.array([lone_job_time(cls, capacity, dist, replication_seed(seed, 0, r))
                      for r in range(reps)])
    dom = max(x / c for x, c in zip(cls.claimed, capacity))
    fluid_time = cls.sigma * cls.tau * dom
    mean = times.mean()
    rate = fluid_time / mean
    hw = float(half_width(times[:, None])[0]) * fluid_time / mean ** 2
    return rate, hw
