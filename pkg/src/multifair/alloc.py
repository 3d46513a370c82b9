"""Static multi-resource allocation kernels.

All allocations work on normalized demands: ``a[i, j]`` is the fraction of
resource ``j`` used by one unit of task volume of job ``i``, so that the
capacity constraints read ``sum_i phi_i * a[i, j] <= 1``.

Most functions accept an optional ``counts`` vector.  Row ``i`` then stands
for ``counts[i]`` identical jobs, each receiving ``phi[i]``; this is how the
simulators aggregate jobs of the same class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Optional

import numpy as np

from .errors import ConvergenceError, ValidationError

DEFAULT_TOL = 1e-9


def as_fraction(x) -> Fraction:
    """Exact rational value of ``x`` (floats are converted bit-exactly)."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    x = float(x)
    if not math.isfinite(x):
        raise ValidationError(f"non-finite demand {x!r}")
    return Fraction(x)


class DemandMatrix:
    """Normalized per-task requirements, one row per job (or class).

    Entries are kept both as exact fractions (used by water-filling) and as
    a float array ``a`` (used by the multiplier solvers).
    """

    def __init__(self, rows, J: Optional[int] = None):
        exact = tuple(tuple(as_fraction(x) for x in row) for row in rows)
        if J is None:
            if not exact:
                raise ValidationError("empty demand matrix needs an explicit resource count")
            J = len(exact[0])
        if J < 1:
            raise ValidationError("at least one resource is required")
        for i, row in enumerate(exact):
            if len(row) != J:
                raise ValidationError(f"row {i} has {len(row)} entries, expected {J}")
            if any(x < 0 for x in row):
                raise ValidationError(f"row {i} has a negative requirement")
            if any(x > 1 for x in row):
                raise ValidationError(f"row {i} exceeds the normalized capacity 1")
            if not any(x > 0 for x in row):
                raise ValidationError(f"row {i} needs no resource")
        self.exact = exact
        self.J = J
        self.a = np.array([[float(x) for x in row] for row in exact], dtype=float).reshape(len(exact), J)

    @property
    def n(self) -> int:
        return len(self.exact)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"DemandMatrix({[[str(x) for x in row] for row in self.exact]})"

    def dominant(self) -> np.ndarray:
        """Largest normalized requirement of each row."""
        if self.n == 0:
            return np.zeros(0)
        return self.a.max(axis=1)

    def replace_row(self, i: int, row) -> "DemandMatrix":
        rows = list(self.exact)
        rows[i] = row
        return DemandMatrix(rows, self.J)

    def drop_column(self, j: int) -> "DemandMatrix":
        return DemandMatrix([r[:j] + r[j + 1:] for r in self.exact], self.J - 1)


def as_demand(a) -> DemandMatrix:
    if isinstance(a, DemandMatrix):
        return a
    return DemandMatrix(a)


@dataclass
class Allocation:
    """Per-job task volumes together with the resulting resource usage."""

    phi: np.ndarray
    usage: np.ndarray
    exact: Optional[tuple] = None

    def shares(self, a) -> np.ndarray:
        """Resource shares ``phi_i * a_ij`` (per job, not multiplied by counts)."""
        return self.phi[:, None] * as_demand(a).a


@dataclass(frozen=True)
class SolverParams:
    """Settings of the multiplier iteration.

    ``step=None`` means the default ``0.05 / n`` for ``n`` jobs.
    """

    step: Optional[float] = None
    max_iters: int = 200_000
    kkt_tol: float = 1e-8
    polish_every: int = 500

    def __post_init__(self):
        if self.step is not None and not self.step > 0:
            raise ValidationError("step must be positive")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be positive")
        if not self.kkt_tol > 0:
            raise ValidationError("kkt_tol must be positive")


def _counts(counts, n) -> np.ndarray:
    if counts is None:
        return np.ones(n)
    m = np.asarray(counts, dtype=float)
    if m.shape != (n,) or (m < 0).any():
        raise ValidationError("counts must be a non-negative vector with one entry per row")
    return m


def normalize_demands(raw, capacities) -> DemandMatrix:
    """Divide absolute per-task requirements by resource capacities."""
    caps = [as_fraction(c) for c in capacities]
    if not caps or any(c <= 0 for c in caps):
        raise ValidationError("capacities must be strictly positive")
    rows = []
    for i, row in enumerate(raw):
        row = [as_fraction(x) for x in row]
        if len(row) != len(caps):
            raise ValidationError(f"row {i} does not match the number of capacities")
        if any(x < 0 for x in row):
            raise ValidationError(f"row {i} has a negative requirement")
        if not any(x > 0 for x in row):
            raise ValidationError(f"row {i} needs no resource")
        rows.append([x / c for x, c in zip(row, caps)])
    return DemandMatrix(rows, len(caps))


# -- water-filling ---------------------------------------------------------

def _water_fill_float(A, w, m):
    n, J = A.shape
    phi = np.zeros(n)
    used = np.zeros(J)
    saturated = np.zeros(J, dtype=bool)
    active = m > 0
    while active.any():
        slope = (m * w * active) @ A
        open_ = ~saturated & (slope > 0)
        level = np.full(J, np.inf)
        level[open_] = (1.0 - used[open_]) / slope[open_]
        best = level.min()
        hit = open_ & (level <= best * (1 + 1e-12))
        saturated |= hit
        done = active & (A[:, hit] > 0).any(axis=1)
        phi[done] = w[done] * best
        used += (m[done] * phi[done]) @ A[done]
        active &= ~done
    return Allocation(phi, used)


def water_fill(a, weights, counts=None, exact: bool = True) -> Allocation:
    """Weighted progressive filling.

    Job volumes grow as ``weights[i] * t``.  At each step the next resource
    saturation level is computed in closed form and every job needing a
    newly saturated resource is frozen.  With ``exact=True`` the whole
    computation is done in rational arithmetic; otherwise in floats, which
    is what the simulators use.
    """
    a = as_demand(a)
    if not exact:
        w = np.array([float(x) for x in weights])
        if w.shape != (a.n,) or (w <= 0).any():
            raise ValidationError("weights must be positive, one per job")
        return _water_fill_float(a.a, w, _counts(counts, a.n))
    n, J = a.n, a.J
    w = [as_fraction(x) for x in weights]
    if len(w) != n or any(x <= 0 for x in w):
        raise ValidationError("weights must be positive, one per job")
    m = [as_fraction(1)] * n if counts is None else [as_fraction(c) for c in counts]
    if len(m) != n or any(c < 0 for c in m):
        raise ValidationError("counts must be non-negative, one per job")

    phi = [Fraction(0)] * n
    frozen_use = [Fraction(0)] * J
    saturated = [False] * J
    active = {i for i in range(n) if m[i] > 0}
    rows = a.exact
    while active:
        best = None
        hit = []
        for j in range(J):
            if saturated[j]:
                continue
            slope = sum((m[i] * w[i] * rows[i][j] for i in active if rows[i][j]), Fraction(0))
            if slope == 0:
                continue
            level = (1 - frozen_use[j]) / slope
            if best is None or level < best:
                best, hit = level, [j]
            elif level == best:
                hit.append(j)
        for j in hit:
            saturated[j] = True
        done = [i for i in active if any(rows[i][j] for j in hit)]
        for i in done:
            phi[i] = w[i] * best
            active.discard(i)
            for j in range(J):
                frozen_use[j] += m[i] * phi[i] * rows[i][j]
    phi_f = np.array([float(x) for x in phi])
    usage = np.array([float(x) for x in frozen_use])
    return Allocation(phi_f, usage, tuple(phi))


def maxmin_allocate(a, counts=None, exact: bool = True) -> Allocation:
    """Max-min fair task volumes (unweighted water-filling)."""
    a = as_demand(a)
    return water_fill(a, [1] * a.n, counts, exact)


def drf_weights(a) -> tuple:
    """DRF weights ``1 / max_j a_ij`` as exact fractions."""
    a = as_demand(a)
    return tuple(1 / max(row) for row in a.exact)


def drf_allocate(a, counts=None, exact: bool = True) -> Allocation:
    """Dominant resource fairness: water-filling weighted by :func:`drf_weights`."""
    a = as_demand(a)
    if not exact:
        return water_fill(a, 1.0 / a.a.max(axis=1), counts, False)
    return water_fill(a, drf_weights(a), counts)


# -- utility maximization via Lagrange multipliers --------------------------

def _volumes(s, alpha):
    # inverse marginal utility: phi = s ** (-1 / alpha)
    with np.errstate(divide="ignore"):
        if alpha == 1:
            return 1.0 / s
        return s ** (-1.0 / alpha)


def _dual_value(x, A, m, alpha, s=None):
    if s is None:
        s = A @ x
    if alpha == 1:
        return x.sum() - (m * np.log(s)).sum()
    p = 1.0 - 1.0 / alpha
    return x.sum() - (m * s ** p).sum() / p


def _kkt_error(F, x):
    # stationarity on positive multipliers, dual feasibility on zero ones
    pos = x > 0
    return max(np.abs(F[pos]).max(initial=0.0), F[~pos].max(initial=0.0))


def _newton(A, m, alpha, x, tol, max_iter=None):
    """Active-set Newton method for the dual over ``nu >= 0``.

    Newton steps act on the positive multipliers and stop at the boundary
    when one of them would turn negative.  A zero multiplier whose
    resource is overloaded is released only once the others are optimal.
    Returns None if the iteration stalls before reaching ``tol``.
    """
    J = A.shape[1]
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    s = A @ x
    if (s <= 0).any():
        # give every uncovered job a positive price on its dominant resource
        scale = max(x.max(), 1.0)
        for i in np.flatnonzero(s <= 0):
            j = int(np.argmax(A[i]))
            x[j] = max(x[j], scale)
    if max_iter is None:
        max_iter = 100 + 20 * J
    inv = -1.0 / alpha
    null_spaces = {}
    s = A @ x
    for _ in range(max_iter):
        phi = 1.0 / s if alpha == 1 else s ** inv
        F = (m * phi) @ A - 1.0
        err = _kkt_error(F, x)
        if err <= tol:
            return x
        S = x > 0
        # With more positive multipliers than independent jobs the dual is linear
        # along the null space of A[:, S]; move along it until a multiplier hits zero.
        key = S.tobytes()
        N = null_spaces.get(key)
        if N is None:
            sv, Vt = np.linalg.svd(A[:, S])[1:]
            N = null_spaces[key] = Vt[int((sv > 1e-12 * sv[0]).sum()):].T
        FS = F[S]
        null_move = False
        if N.shape[1]:
            dS = N @ (N.T @ FS)
            null_move = np.abs(dS).max() > 1e-12 * (1 + np.abs(FS).max())
        if not null_move:
            if np.abs(FS).max(initial=0.0) <= tol:
                S[int(np.argmax(np.where(S, -np.inf, F)))] = True
                FS = F[S]
            AS = A[:, S]
            curv = m * phi / (alpha * s)
            H = (AS * curv[:, None]).T @ AS
            try:
                dS = np.linalg.solve(H, FS)
            except np.linalg.LinAlgError:
                dS = np.linalg.lstsq(H, FS, rcond=1e-13)[0]
            if not FS @ dS > 0:
                dS = FS / np.diag(H).max()
        dx = np.zeros(J)
        dx[S] = dS
        neg = dx < 0
        t_max = np.min(-x[neg] / dx[neg]) if neg.any() else np.inf
        d0 = _dual_value(x, A, m, alpha, s)
        slope = F @ dx
        t = t_max if null_move and t_max < np.inf else min(1.0, t_max)
        while t > 1e-14:
            xn = np.maximum(x + t * dx, 0.0)
            if t == t_max:
                xn[neg & (-x / np.where(neg, dx, -1.0) <= t_max)] = 0.0
            sn = A @ xn
            if (sn > 0).all():
                dn = _dual_value(xn, A, m, alpha, sn)
                if dn <= d0 - 1e-4 * t * slope:
                    break
                # a degenerate step onto the boundary still shrinks the active set
                if t == t_max and dn <= d0 + 1e-13 * abs(d0):
                    break
                # near the optimum the dual value is flat to rounding; fall back to the gradient
                Fn = (m * (1.0 / sn if alpha == 1 else sn ** inv)) @ A - 1.0
                if np.abs(Fn[S]).max() < (1 - 1e-4 * t) * np.abs(F[S]).max():
                    break
            t *= 0.5
        else:
            return None
        if np.array_equal(xn, x):
            return None
        x, s = xn, sn
    return None


def kkt_residual(a, phi, nu, counts=None, alpha: float = 1.0) -> float:
    """Largest violation of the utility-maximization KKT system."""
    a = as_demand(a)
    A = a.a
    phi = np.asarray(phi, dtype=float)
    nu = np.asarray(nu, dtype=float)
    m = _counts(counts, a.n)
    live = m > 0
    if not live.any():
        return 0.0
    return _residual(A[live], m[live], phi[live], nu, alpha)


def _active_set(A, m, alpha, nu, tol):
    nu = np.where(A.any(axis=0), nu, 0.0)
    return _newton(A, m, alpha, nu, tol)


def _solve(a: DemandMatrix, alpha: float, params: SolverParams, counts, nu0):
    n_rows, J = a.n, a.J
    m_all = _counts(counts, n_rows)
    live = m_all > 0
    phi_all = np.zeros(n_rows)
    n = float(m_all.sum())
    if not live.any():
        return Allocation(phi_all, np.zeros(J)), np.zeros(J)
    A = a.a[live]
    m = m_all[live]
    dom = A.max(axis=1)

    if A.shape[0] == 1:
        # a single (class of) job saturates its dominant resource
        phi = 1.0 / (m[0] * dom[0])
        d = int(np.argmax(A[0]))
        nu = np.zeros(J)
        nu[d] = phi ** (-alpha) / A[0, d]
        phi_all[live] = phi
        return Allocation(phi_all, m[0] * phi * A[0]), nu

    cols = A.any(axis=0)
    if nu0 is not None:
        nu = np.array(nu0, dtype=float)
        nu[~cols] = 0.0
    elif alpha == 1:
        nu = np.where(cols, n / J, 0.0)
    else:
        # start on the scale where the most loaded resource is just full
        nu = cols.astype(float)
        u = (m * _volumes(A @ nu, alpha)) @ A
        nu *= u.max() ** alpha

    tol = params.kkt_tol
    # complementary slackness scales with the multipliers, which grow like n
    newton_tol = max(1e-3 * tol / max(n, 1.0), 64 * np.finfo(float).eps)
    step = params.step if params.step is not None else 0.05 / n
    cap = 1.0 / dom
    residual = float("inf")
    for it in range(params.max_iters + 1):
        if it % params.polish_every == 0:
            cand = _active_set(A, m, alpha, nu, newton_tol)
            if cand is not None:
                phi = _volumes(A @ cand, alpha)
                residual = _residual(A, m, phi, cand, alpha)
                if residual <= tol:
                    phi_all[live] = phi
                    return Allocation(phi_all, (m * phi) @ A), cand
        # projected gradient step on the multipliers
        s = A @ nu
        psi = np.minimum(_volumes(np.where(s > 0, s, 0.0), alpha), cap)
        grad = (m * psi) @ A - 1.0
        nu = np.maximum(nu + step * grad, 0.0)
    phi = np.minimum(_volumes(A @ nu, alpha), cap)
    residual = min(residual, _residual(A, m, phi, nu, alpha))
    raise ConvergenceError(
        f"multiplier iteration did not converge in {params.max_iters} steps "
        f"(residual {residual:.3g})", residual, params.max_iters)


def _residual(A, m, phi, nu, alpha):
    u = (m * phi) @ A
    with np.errstate(divide="ignore"):
        marginal = phi ** (-alpha)
    # PF is checked in absolute terms; other alphas relative to the largest marginal utility
    scale = 1.0 if alpha == 1 else max(1.0, float(marginal.max()))
    return float(max(np.abs(marginal - A @ nu).max() / scale, max((u - 1).max(), 0.0),
                     max((-nu).max(), 0.0) / scale, np.abs(nu * (u - 1)).max() / scale))


def pf_allocate(a, params: Optional[SolverParams] = None, counts=None, nu0=None):
    """Proportionally fair allocation and its capacity multipliers.

    Returns ``(Allocation, nu)`` with ``1/phi_i = sum_j a_ij nu_j`` and
    complementary slackness holding to ``params.kkt_tol``.  ``nu0`` warm
    starts the iteration.
    """
    a = as_demand(a)
    return _solve(a, 1.0, params or SolverParams(), counts, nu0)


def alpha_fair_allocate(a, alpha: float, params: Optional[SolverParams] = None,
                        counts=None, nu0=None):
    """Alpha-fair allocation, marginal utility ``phi ** -alpha``."""
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    if alpha == 1:
        return pf_allocate(a, params, counts, nu0)
    a = as_demand(a)
    return _solve(a, float(alpha), params or SolverParams(), counts, nu0)


# -- properties ------------------------------------------------------------

def dominant_share(a, phi, i: int) -> float:
    a = as_demand(a)
    if not 0 <= i < a.n:
        raise IndexError(f"job index {i} out of range for {a.n} jobs")
    phi = phi.phi if isinstance(phi, Allocation) else phi
    return float(phi[i]) * float(a.a[i].max())


@dataclass
class PropertyReport:
    pareto_efficient: bool
    sharing_incentive: bool
    local_fair: Optional[bool]
    saturated: np.ndarray
    dominant_shares: np.ndarray


def check_properties(a, phi, tol: float = DEFAULT_TOL) -> PropertyReport:
    """Evaluate Pareto-efficiency, sharing-incentive and local fairness.

    ``local_fair`` is None when there is more than one resource.
    """
    a = as_demand(a)
    phi = np.asarray(phi.phi if isinstance(phi, Allocation) else phi, dtype=float)
    A = a.a
    n = a.n
    u = phi @ A if n else np.zeros(a.J)
    saturated = u >= 1.0 - tol
    needs = A > 0
    pareto = bool((needs & saturated).any(axis=1).all()) if n else True
    dom = phi * A.max(axis=1) if n else np.zeros(0)
    sharing = bool((dom >= 1.0 / n - tol).all()) if n else True
    local = None
    if a.J == 1 and n:
        local = bool((np.abs(phi * A[:, 0] - 1.0 / n) <= tol).all())
    return PropertyReport(pareto, sharing, local, saturated, dom)


def resource_shares(a, phi) -> np.ndarray:
    a = as_demand(a)
    phi = np.asarray(phi.phi if isinstance(phi, Allocation) else phi, dtype=float)
    return phi[:, None] * a.a
