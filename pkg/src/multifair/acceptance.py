"""Mechanical acceptance checks, one registry entry per criterion.

Each criterion is a function of a parameter dict (defaults below, which a
TOML criteria file may override) returning a list of :class:`Check`.
Results are memoized per (criterion, parameters) so that several callers
in one process share the expensive simulations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .alloc import (alpha_fair_allocate, drf_allocate, kkt_residual, pf_allocate, resource_shares)
from .analytic import (TwoClassProfile, gamma1_pf, heavy_traffic_gamma, light_traffic_gamma,
                       optimal_claim, zero_load_ratio)
from .errors import ValidationError
from .fluid import simulate_fluid, simulate_permanent_job
from .tasks import TaskDistribution, lone_job_rate, simulate_tasks
from .traffic import TrafficClass, replicate


@dataclass
class Check:
    criterion: int
    name: str
    measured: object
    target: object
    tol: object
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = (f"{status} [{self.criterion}] {self.name}: measured={_fmt(self.measured)} "
                f"target={_fmt(self.target)} tol={_fmt(self.tol)}")
        diff = _diff(self.measured, self.target)
        if diff is not None:
            text += f" diff={diff:.3g}"
        if self.note:
            text += f" ({self.note})"
        return text


def _fmt(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    if isinstance(x, (tuple, list, np.ndarray)):
        return "(" + ", ".join(_fmt(v) for v in x) + ")"
    return str(x)


def _diff(measured, target):
    try:
        m = np.asarray(measured, dtype=float)
        t = np.asarray(target, dtype=float)
        if m.shape != t.shape:
            return None
        return float(np.abs(m - t).max())
    except (TypeError, ValueError):
        return None


def _close(x, y, tol):
    return bool(np.all(np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) <= tol))


# -- static criteria -------------------------------------------------------

def _drf_examples(p):
    out = []
    cases = [
        ("drf-coupled", [[1, Fraction(1, 3)], [Fraction(1, 2), 1]], (Fraction(2, 3), Fraction(2, 3))),
        ("drf-unused-resource", [[1, 0], [Fraction(1, 2), 0]], (Fraction(1), Fraction(2))),
    ]
    for name, a, want in cases:
        got = drf_allocate(a).exact
        out.append(Check(1, name, got, want, p["tol"], _close(got, want, p["tol"])))
    return out


PF_EXAMPLES = [
    ("pf-truthful", [[0.5, 1], [1, 0.5]], (2 / 3, 2 / 3), (1, 1)),
    ("pf-false-claim", [[2 / 3, 1], [1, 0.5]], (3 / 4, 1 / 2), (2, 0)),
    ("pf-unbalanced", [[0.5, 1], [1, 1 / 3]], (4 / 5, 3 / 5), (1, 1)),
    ("pf-inflated-claim", [[1, 1], [1, 0.5]], (1 / 2, 1 / 2), (2, 0)),
]


def _pf_examples(p):
    out = []
    for name, a, phi, nu in PF_EXAMPLES:
        alloc, got_nu = pf_allocate(a)
        res = kkt_residual(a, alloc.phi, got_nu)
        out.append(Check(2, f"{name}-phi", alloc.phi, phi, p["tol"], _close(alloc.phi, phi, p["tol"])))
        out.append(Check(2, f"{name}-nu", got_nu, nu, p["tol"], _close(got_nu, nu, p["tol"])))
        out.append(Check(2, f"{name}-kkt", res, 0.0, p["kkt_tol"], res <= p["kkt_tol"]))
    return out


def _random_instance(rng, n_max, j_max):
    n = int(rng.integers(1, n_max + 1))
    J = int(rng.integers(1, j_max + 1))
    a = rng.random((n, J))
    a[rng.random((n, J)) < 0.25] = 0.0
    a[np.arange(n), rng.integers(0, J, n)] = 1.0
    return a / a.max(axis=1, keepdims=True)


def _properties(p):
    rng = np.random.default_rng(p["seed"])
    tol = p["tol"]
    worst = {k: 0.0 for k in ("sp", "si_drf", "si_pf", "scale_drf", "scale_pf", "sum_nu", "local")}
    for _ in range(p["instances"]):
        a = _random_instance(rng, p["n_max"], p["j_max"])
        n, J = a.shape
        drf = drf_allocate(a.tolist())
        pf, nu = pf_allocate(a)

        # strategy-proofness: a false row never buys more usable tasks
        i = int(rng.integers(n))
        lie = a.copy()
        lie[i] = np.where(a[i] > 0, np.maximum(rng.random(J), 0.05), rng.random(J) * (rng.random(J) < 0.5))
        lie[i] /= lie[i].max()
        phi_lie = drf_allocate(lie.tolist()).phi[i]
        need = a[i] > 0
        usable = float((phi_lie * lie[i][need] / a[i][need]).min())
        worst["sp"] = max(worst["sp"], usable - drf.phi[i])

        for key, alloc in (("si_drf", drf.phi), ("si_pf", pf.phi)):
            dom = alloc * a.max(axis=1)
            worst[key] = max(worst[key], float((1 / n - dom).max()))

        # factors at most 1 keep every entry of the scaled matrix in [0, 1]
        k = rng.uniform(0.05, 1.0, n)
        scaled = a * k[:, None]
        for key, fn in (("scale_drf", lambda x: drf_allocate(x.tolist()).phi),
                        ("scale_pf", lambda x: pf_allocate(x)[0].phi)):
            phi, phi_s = fn(a), fn(scaled)
            dev = max(float(np.abs(resource_shares(scaled, phi_s) - resource_shares(a, phi)).max()),
                      float(np.abs(phi_s * k - phi).max()))
            worst[key] = max(worst[key], dev)

        worst["sum_nu"] = max(worst["sum_nu"], abs(float(nu.sum()) - n) / n)

        b = rng.uniform(0.05, 1.0, (n, 1))
        for fn in (lambda x: drf_allocate(x.tolist()).phi, lambda x: pf_allocate(x)[0].phi):
            shares = resource_shares(b, fn(b))[:, 0]
            worst["local"] = max(worst["local"], float(np.abs(shares - 1 / n).max()))

    names = {
        "sp": ("drf-strategy-proof", tol), "si_drf": ("drf-sharing-incentive", tol),
        "si_pf": ("pf-sharing-incentive", tol), "scale_drf": ("drf-scale-invariance", tol),
        "scale_pf": ("pf-scale-invariance", tol), "sum_nu": ("pf-multipliers-sum-to-n", p["kkt_tol"]),
        "local": ("local-fairness-single-resource", tol),
    }
    return [Check(3, names[k][0], max(v, 0.0), 0.0, names[k][1], v <= names[k][1],
                  f"worst over {p['instances']} instances") for k, v in worst.items()]


def _counterexamples(p):
    tol = p["tol"]
    out = []
    (truth, _), (lie, _) = pf_allocate([[0.5, 1], [1, 0.5]]), pf_allocate([[2 / 3, 1], [1, 0.5]])
    s_true = resource_shares([[0.5, 1], [1, 0.5]], truth.phi)
    s_lie = resource_shares([[2 / 3, 1], [1, 0.5]], lie.phi)
    out.append(Check(4, "pf-false-claim-job1-share", (s_true[0, 0], s_lie[0, 0]), (1 / 3, 1 / 2), tol,
                     _close((s_true[0, 0], s_lie[0, 0]), (1 / 3, 1 / 2), tol)))
    out.append(Check(4, "pf-false-claim-job2-loses", s_lie[1] - s_true[1], "< 0", 0.0,
                     bool((s_lie[1] < s_true[1] - tol).all())))
    x = 3.0
    a = [[0.5], [1 / (2 * x)]]
    for alpha in p["alphas"]:
        alloc, _ = alpha_fair_allocate(a, alpha)
        shares = resource_shares(a, alloc.phi)[:, 0]
        gap = abs(shares[0] - shares[1])
        if alpha == 1:
            out.append(Check(4, f"alpha={alpha:g}-shares-equal", gap, 0.0, tol, gap <= tol))
        else:
            out.append(Check(4, f"alpha={alpha:g}-shares-unequal", gap, "> 0", p["min_gap"], gap > p["min_gap"]))
    return out


# -- fluid criteria --------------------------------------------------------

def _horizon(classes, events):
    lam = sum(c.lam for c in classes)
    return events / (2 * lam)


def _fluid(classes, policy, p, key):
    horizon = _horizon(classes, p["events"])
    run = _Runner(simulate_fluid, classes, policy, horizon)
    return replicate(run, p["seed"], p["reps"], key=key)


class _Runner:
    """Picklable ``seed -> SimResult`` closure."""

    def __init__(self, fn, *args):
        self.fn, self.args = fn, args

    def __call__(self, seed):
        return self.fn(*self.args, seed=seed)


def _processor_sharing(p):
    out = []
    demand = [(1.0,), (0.5,)]
    for li, rho in enumerate(p["loads"]):
        for policy in ("drf", "pf"):
            classes = [TrafficClass(rho / 2, 1, 1, demand[0]), TrafficClass(rho / demand[1][0] / 2, 1, 1, demand[1])]
            res = _fluid(classes, policy, p, (5, li))
            for k in range(2):
                tol = p["ci_mult"] * res.ci[k]
                ok = abs(res.gamma[k] - (1 - rho)) <= tol
                out.append(Check(5, f"ps-{policy}-rho={rho:g}-class{k + 1}", res.gamma[k], 1 - rho,
                                 tol, bool(ok), f"{p['ci_mult']:g} half-widths"))
    return out


def _two_class(alpha, beta, rho1, rho2):
    return [TrafficClass(rho1, 1, 1, (1.0, alpha)), TrafficClass(rho2, 1, 1, (beta, 1.0))]


def _light_traffic(p):
    out = []
    prof = TwoClassProfile(p["alpha"], p["beta"], p["rho1"], p["rho2"])
    classes = _two_class(prof.alpha, prof.beta, prof.rho1, prof.rho2)
    for pi, policy in enumerate(("drf", "pf")):
        res = _fluid(classes, policy, p, (6, pi))
        want = light_traffic_gamma(prof, policy)[1]
        ok = abs(res.gamma[1] - want) <= p["tol"]
        out.append(Check(6, f"light-{policy}-gamma2", res.gamma[1], want, p["tol"], bool(ok),
                         f"ci={res.ci[1]:.3g}"))
    return out


def _heavy_traffic(p):
    out = []
    alpha, load = p["alpha"], p["load"]
    # resource-1 load rho1 + alpha * rho2 = load with rho1 = ratio * rho2
    rho2 = load / (p["ratio"] + alpha)
    prof = TwoClassProfile(alpha, alpha, p["ratio"] * rho2, rho2)
    classes = _two_class(alpha, alpha, prof.rho1, prof.rho2)
    got = {}
    for pi, policy in enumerate(("drf", "pf")):
        res = _fluid(classes, policy, p, (7, pi))
        got[policy] = res
        want = heavy_traffic_gamma(prof, policy)[1]
        rel = abs(res.gamma[1] - want) / want
        out.append(Check(7, f"heavy-{policy}-gamma2", res.gamma[1], want, p["rel_tol"],
                         bool(rel <= p["rel_tol"]), f"relative error {rel:.3g}, ci={res.ci[1]:.3g}"))
    adv = got["pf"].gamma[1] - got["drf"].gamma[1]
    out.append(Check(7, "heavy-pf-advantage-class2", adv, "> 0", 0.0, bool(adv > 0)))
    return out


def _dynamic_strategy_proofness(p):
    out = []
    alpha = p["alpha"]
    betas = [optimal_claim(n, alpha) for n in p["ns"]]
    for ri, rho2 in enumerate(p["rho2"]):
        truthful = gamma1_pf(alpha, alpha, rho2)
        for n, beta in zip(p["ns"], betas):
            g = gamma1_pf(alpha, beta, rho2)
            out.append(Check(8, f"analytic-false(n={n})-rho2={rho2:g}", g, f"<= {truthful:.6g}", 1e-12,
                             bool(g <= truthful + 1e-12)))
        for bi, beta in enumerate([alpha] + betas):
            horizon = p["events"] / (2 * rho2)
            run = _Runner(simulate_permanent_job, alpha, beta, rho2, "pf", horizon)
            res = replicate(run, p["seed"], p["reps"], key=(8, ri, bi))
            want = gamma1_pf(alpha, beta, rho2)
            tol = p["ci_mult"] * res.ci[0]
            out.append(Check(8, f"sim-vs-analytic-beta={beta:.4g}-rho2={rho2:g}", res.gamma[0], want, tol,
                             bool(abs(res.gamma[0] - want) <= tol)))
    return out


# -- task criteria ---------------------------------------------------------

def _lone_job(p):
    cls = TrafficClass(1.0, p["sigma"], 1.0, (1.0, 1.0))
    caps = [p["capacity"], p["capacity"]]
    exp_rate, exp_hw = lone_job_rate(cls, caps, TaskDistribution(), p["reps"], p["seed"])
    erl_rate, erl_hw = lone_job_rate(cls, caps, TaskDistribution.erlang(p["erlang_k"]), p["reps"], p["seed"])
    closed = zero_load_ratio(int(p["sigma"]), int(p["capacity"]))
    return [
        Check(9, "lone-job-exponential", exp_rate, p["target"], p["tol"],
              abs(exp_rate - p["target"]) <= p["tol"], f"ci={exp_hw:.3g}, closed form {closed:.6g}"),
        Check(9, f"lone-job-erlang{p['erlang_k']}-above-exponential", erl_rate, f"> {exp_rate:.6g}", 0.0,
              erl_rate > exp_rate, f"ci={erl_hw:.3g}"),
        Check(9, f"lone-job-erlang{p['erlang_k']}-floor", erl_rate, f">= {p['erlang_floor']:g}", 0.0,
              erl_rate >= p["erlang_floor"], f"ci={erl_hw:.3g}"),
    ]


def _fig6_ordering(p):
    from .scenarios import _classes_at, builtin
    cfg = builtin(p["scenario"])
    classes = _classes_at(cfg, p["load"])
    dist = TaskDistribution(cfg.distribution, cfg.erlang_k if cfg.distribution == "erlang" else 1)
    res = {}
    for pi, policy in enumerate(("drf", "pf")):
        run = _Runner(simulate_tasks, classes, cfg.capacity, policy, dist, p["horizon"])
        res[policy] = replicate(run, p["seed"], p["reps"], key=(10, pi))
    d, f = res["drf"], res["pf"]
    gap = f.gamma[1] - d.gamma[1]
    separated = (f.gamma[1] - f.ci[1]) > (d.gamma[1] + d.ci[1])
    return [
        Check(10, "fig6-pf-minus-drf-class2", gap, "> 0", 0.0, bool(gap > 0),
              f"PF {f.gamma[1]:.4g}±{f.ci[1]:.2g}, DRF {d.gamma[1]:.4g}±{d.ci[1]:.2g}"),
        Check(10, "fig6-cis-disjoint", (d.gamma[1] + d.ci[1], f.gamma[1] - f.ci[1]), "DRF upper < PF lower",
              0.0, bool(separated)),
    ]


# -- registry --------------------------------------------------------------

@dataclass(frozen=True)
class Criterion:
    number: int
    name: str
    run: Callable
    defaults: dict
    doc: str


CRITERIA = {c.name: c for c in [
    Criterion(1, "drf-examples", _drf_examples, {"tol": 1e-9},
              "DRF worked examples in exact arithmetic"),
    Criterion(2, "pf-examples", _pf_examples, {"tol": 1e-9, "kkt_tol": 1e-8},
              "PF worked examples: volumes, multipliers, KKT residual"),
    Criterion(3, "properties", _properties,
              {"instances": 1000, "n_max": 5, "j_max": 3, "seed": 20, "tol": 1e-9, "kkt_tol": 1e-8},
              "randomized property suites"),
    Criterion(4, "counterexamples", _counterexamples,
              {"tol": 1e-9, "alphas": [0.5, 1.0, 2.0, 4.0], "min_gap": 1e-6},
              "false-claim gain under PF and unequal alpha-fair shares"),
    Criterion(5, "processor-sharing", _processor_sharing,
              {"loads": [0.3, 0.5, 0.8], "reps": 10, "events": 220_000, "ci_mult": 3.0, "seed": 1},
              "single resource matches processor sharing"),
    Criterion(6, "light-traffic", _light_traffic,
              {"alpha": 0.1, "beta": 0.5, "rho1": 0.05, "rho2": 0.05, "tol": 0.02,
               "reps": 10, "events": 220_000, "seed": 1},
              "light-traffic class-2 service rates"),
    Criterion(7, "heavy-traffic", _heavy_traffic,
              {"alpha": 0.1, "load": 0.95, "ratio": 3.0, "rel_tol": 0.15,
               "reps": 10, "events": 220_000, "seed": 1},
              "heavy-traffic class-2 service rates, unbalanced load"),
    Criterion(8, "dynamic-strategy-proofness", _dynamic_strategy_proofness,
              {"alpha": 0.1, "ns": [1, 2, 5], "rho2": [round(0.1 * i, 1) for i in range(1, 10)],
               "reps": 10, "events": 220_000, "ci_mult": 3.0, "seed": 1},
              "permanent job: false claims do not pay, simulation matches the chain"),
    Criterion(9, "lone-job", _lone_job,
              {"sigma": 500, "capacity": 100, "reps": 1000, "erlang_k": 20, "target": 0.544,
               "tol": 0.01, "erlang_floor": 0.9, "seed": 1},
              "zero-load service rate of the task model"),
    Criterion(10, "fig6-ordering", _fig6_ordering,
              {"scenario": "fig6exp", "load": 0.8, "horizon": 1000.0, "reps": 10, "seed": 1},
              "PF beats DRF for class 2 in the task model"),
]}

SEEDED = {name for name, c in CRITERIA.items() if "seed" in c.defaults and c.number >= 5}

_memo: dict = {}


def _freeze(v):
    if isinstance(v, (list, tuple)):
        return tuple(_freeze(x) for x in v)
    return v


def resolve(name: str, overrides: Optional[dict] = None) -> dict:
    if name not in CRITERIA:
        raise ValidationError(f"unknown criterion {name!r}; known: {', '.join(CRITERIA)}")
    params = dict(CRITERIA[name].defaults)
    for key, value in (overrides or {}).items():
        if key not in params:
            raise ValidationError(f"criterion {name!r}: unknown parameter {key!r}")
        params[key] = value
    return params


def evaluate(name: str, overrides: Optional[dict] = None) -> list:
    """Run one criterion (memoized) and return its checks."""
    params = resolve(name, overrides)
    key = (name, tuple(sorted((k, _freeze(v)) for k, v in params.items())))
    if key not in _memo:
        _memo[key] = CRITERIA[name].run(params)
    return _memo[key]


def load_criteria(path) -> dict:
    """Parse a criteria file into ``{criterion name: overrides}``.

    The file has an optional top-level ``seed`` (applied to every
    simulation criterion) and one ``[criteria.<name>]`` table per criterion
    to run, holding parameter overrides.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: no such criteria file")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return parse_criteria(data, str(path))


def parse_criteria(data: dict, source: str = "<criteria>") -> dict:
    extra = set(data) - {"seed", "criteria"}
    if extra:
        raise ValidationError(f"{source}: unknown top-level key(s) {sorted(extra)}")
    table = data.get("criteria", {})
    if not isinstance(table, dict) or not table:
        raise ValidationError(f"{source}: expected at least one [criteria.<name>] table")
    out = {}
    for name, overrides in table.items():
        if not isinstance(overrides, dict):
            raise ValidationError(f"{source}: criteria.{name} must be a table")
        overrides = dict(overrides)
        if "seed" in data and name in SEEDED:
            overrides.setdefault("seed", data["seed"])
        try:
            resolve(name, overrides)
        except ValidationError as exc:
            raise ValidationError(f"{source}: {exc}") from None
        out[name] = overrides
    return out


def default_criteria(seed: int = 1) -> dict:
    return {name: ({"seed": seed} if name in SEEDED else {}) for name in CRITERIA}


def verify(criteria: dict, echo=print) -> list:
    """Evaluate every criterion in ``criteria``; prints one line per check."""
    checks = []
    for name, overrides in sorted(criteria.items(), key=lambda kv: CRITERIA[kv[0]].number):
        for c in evaluate(name, overrides):
            checks.append(c)
            if echo:
                echo(c.line())
    return checks


def check_results(cfg, meta: dict, rows: list) -> list:
    """Check a results CSV against ``cfg``: matching hash, one finite row per policy, class and load."""
    from .scenarios import expected_keys
    want = expected_keys(cfg)
    have = {(r.policy, r.cls, float(f"{r.load:.6g}")) for r in rows if r.scenario == cfg.name}
    missing = sorted(want - have)
    bad = [r for r in rows if not r.unstable and not math.isfinite(r.gamma)]
    digest = meta.get("config-hash", "")
    return [
        Check(0, f"{cfg.name}-config-hash", digest, cfg.digest(), 0, digest == cfg.digest()),
        Check(0, f"{cfg.name}-rows-complete", len(want) - len(missing), len(want), 0, not missing,
              f"missing {missing[:3]}" if missing else ""),
        Check(0, f"{cfg.name}-gamma-finite", len(bad), 0, 0, not bad),
    ]
