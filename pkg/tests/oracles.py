"""Independent reference solvers built on scipy.optimize, used only by the tests."""

import numpy as np
from scipy.optimize import linprog, minimize


def weighted_maxmin_lp(a, w):
    """Weighted max-min volumes by the classic sequence of linear programs.

    Each round maximizes the common level ``t`` of the still-free jobs
    (``phi_i >= w_i t``), then freezes every free job that cannot exceed
    its level without pushing another free job below it.
    """
    a = np.asarray(a, dtype=float)
    w = np.asarray(w, dtype=float)
    n, J = a.shape
    fixed = np.full(n, np.nan)
    while np.isnan(fixed).any():
        free = np.isnan(fixed)
        # variables: phi (n), t
        bounds = [(v, v) if not f else (0, None) for v, f in zip(fixed, free)] + [(0, None)]
        A_ub = [np.append(a[:, j], 0.0) for j in range(J)]
        b_ub = [1.0] * J
        for i in np.flatnonzero(free):
            row = np.zeros(n + 1)
            row[i], row[n] = -1.0, w[i]
            A_ub.append(row)
            b_ub.append(0.0)
        c = np.zeros(n + 1)
        c[n] = -1.0
        t = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs").x[n]
        progressed = False
        for i in np.flatnonzero(free):
            rows, rhs = list(A_ub[:J]), list(b_ub[:J])
            for k in np.flatnonzero(free):
                row = np.zeros(n + 1)
                row[k] = -1.0
                rows.append(row)
                rhs.append(-w[k] * t * (1 - 1e-9))
            c = np.zeros(n + 1)
            c[i] = -1.0
            best = linprog(c, A_ub=rows, b_ub=rhs, bounds=bounds[:n] + [(0, 0)], method="highs").x[i]
            if best <= w[i] * t * (1 + 1e-7):
                fixed[i] = w[i] * t
                progressed = True
        assert progressed
    return fixed


def alpha_fair_nlp(a, alpha=1.0, counts=None):
    """Alpha-fair volumes by direct SLSQP maximization of the utility."""
    a = np.asarray(a, dtype=float)
    n, J = a.shape
    m = np.ones(n) if counts is None else np.asarray(counts, dtype=float)
    # optimize log-volumes so positivity is automatic
    if alpha == 1:
        f = lambda z: -(m * z).sum()
        g = lambda z: -m
    else:
        p = 1 - alpha
        f = lambda z: -(m * np.exp(p * z)).sum() / p
        g = lambda z: -m * np.exp(p * z)
    cons = [{"type": "ineq", "fun": lambda z, j=j: 1 - (m * np.exp(z)) @ a[:, j],
             "jac": lambda z, j=j: -(m * np.exp(z) * a[:, j])} for j in range(J) if a[:, j].any()]
    z0 = np.full(n, np.log(0.5 / (m.sum() * a.max())))
    res = minimize(f, z0, jac=g, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 2000})
    return np.exp(res.x)
