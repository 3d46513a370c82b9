"""Scenario configs (TOML), built-in figure scenarios and the CSV sweep runner."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from . import __version__
from .alloc import SolverParams
from .analytic import capacity_region_check, gamma1_pf, optimal_claim
from .errors import ValidationError
from .fluid import simulate_fluid, simulate_permanent_job
from .tasks import TaskDistribution, simulate_tasks
from .traffic import Policy, TrafficClass, replicate

CSV_COLUMNS = ["scenario", "policy", "class", "load", "gamma", "ci", "reps", "seed", "unstable"]
SIMULATORS = ("fluid", "task", "permanent")


@dataclass
class ClassSpec:
    name: str
    share: float
    demand: list
    sigma: float = 1.0
    tau: float = 1.0
    claim: Optional[list] = None


@dataclass
class ScenarioConfig:
    name: str
    policies: list
    loads: list
    classes: list = field(default_factory=list)
    simulator: str = "fluid"
    replications: int = 10
    seed: int = 1
    horizon_jobs: float = 10_000
    warmup_fraction: float = 0.1
    capacity: Optional[list] = None
    distribution: str = "exponential"
    erlang_k: int = 20
    geometric_tasks: bool = False
    claim_class: int = 0
    claim_variants: list = field(default_factory=list)
    alpha: float = 0.1
    betas: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = [{k: v for k, v in c.items() if v is not None} for c in d["classes"]]
        return {k: v for k, v in d.items() if v is not None and v != []}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _err(where, msg):
    return ValidationError(f"{where}: {msg}")


def config_from_dict(d: dict, source: str = "<config>") -> ScenarioConfig:
    known = set(ScenarioConfig.__dataclass_fields__)
    unknown = set(d) - known
    if unknown:
        raise _err(source, f"unknown field(s) {sorted(unknown)}")
    for key in ("name", "policies", "loads"):
        if key not in d:
            raise _err(source, f"missing field '{key}'")
    classes = []
    for i, c in enumerate(d.get("classes", [])):
        where = f"{source}: classes[{i}]"
        if not isinstance(c, dict):
            raise _err(where, "must be a table")
        extra = set(c) - set(ClassSpec.__dataclass_fields__)
        if extra:
            raise _err(where, f"unknown field(s) {sorted(extra)}")
        try:
            classes.append(ClassSpec(**{"name": str(i + 1), **c}))
        except TypeError as exc:
            raise _err(where, str(exc)) from None
    cfg = ScenarioConfig(**{**d, "classes": classes})
    validate_config(cfg, source)
    return cfg


def validate_config(cfg: ScenarioConfig, source: str = "<config>") -> None:
    if cfg.simulator not in SIMULATORS:
        raise _err(source, f"simulator: expected one of {SIMULATORS}, got {cfg.simulator!r}")
    if not cfg.policies:
        raise _err(source, "policies: at least one policy is required")
    for p in cfg.policies:
        try:
            Policy.parse(p)
        except ValidationError as exc:
            raise _err(source, f"policies: {exc}") from None
    if not cfg.loads or any(not (isinstance(x, (int, float)) and x > 0) for x in cfg.loads):
        raise _err(source, "loads: load points must be positive numbers")
    if int(cfg.replications) < 1:
        raise _err(source, "replications: must be >= 1")
    if not cfg.horizon_jobs > 0:
        raise _err(source, "horizon_jobs: must be positive")
    if not 0 <= cfg.warmup_fraction < 1:
        raise _err(source, "warmup_fraction: must lie in [0, 1)")
    if cfg.simulator == "permanent":
        if not 0 < cfg.alpha < 1:
            raise _err(source, "alpha: must lie in (0, 1)")
        if not cfg.betas or any(not cfg.alpha <= b <= 1 for b in cfg.betas):
            raise _err(source, "betas: claims must lie in [alpha, 1]")
        return
    if not cfg.classes:
        raise _err(source, "classes: at least one class is required")
    J = len(cfg.classes[0].demand)
    total = 0.0
    for i, c in enumerate(cfg.classes):
        where = f"{source}: classes[{i}]"
        if len(c.demand) != J:
            raise _err(where, f"demand: expected {J} entries")
        if c.claim is not None and len(c.claim) != J:
            raise _err(where, f"claim: expected {J} entries")
        if not c.share >= 0:
            raise _err(where, "share: must be non-negative")
        total += c.share
        try:
            TrafficClass(1.0, c.sigma, c.tau, tuple(c.demand), tuple(c.claim) if c.claim else None, c.name)
        except ValidationError as exc:
            raise _err(where, str(exc)) from None
    if abs(total - 1) > 1e-9:
        raise _err(source, f"classes: shares sum to {total:g}, expected 1")
    caps = cfg.capacity if cfg.capacity is not None else [1.0] * J
    if len(caps) != J or any(not c > 0 for c in caps):
        raise _err(source, f"capacity: expected {J} positive entries")
    for i, c in enumerate(cfg.classes):
        rows = [c.demand] + ([c.claim] if c.claim else [])
        if any(x > cap for row in rows for x, cap in zip(row, caps)):
            raise _err(f"{source}: classes[{i}]", "demand exceeds capacity")
    if cfg.simulator == "task":
        try:
            TaskDistribution(cfg.distribution, cfg.erlang_k if cfg.distribution == "erlang" else 1)
        except ValidationError as exc:
            raise _err(source, f"distribution: {exc}") from None
        for p in cfg.policies:
            if Policy.parse(p).kind not in ("drf", "pf"):
                raise _err(source, "policies: the task simulator supports drf and pf only")
    for k, row in enumerate(cfg.claim_variants):
        if len(row) != J:
            raise _err(source, f"claim_variants[{k}]: expected {J} entries")
    if cfg.claim_variants and not 0 <= cfg.claim_class < len(cfg.classes):
        raise _err(source, "claim_class: no such class")


def load_config(path_or_name) -> ScenarioConfig:
    """Read a TOML scenario file, or return a built-in by name."""
    text = str(path_or_name)
    if text in BUILTINS:
        return builtin(text)
    path = Path(text)
    if not path.exists():
        raise ValidationError(f"{text}: no such file or built-in scenario")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return config_from_dict(data, str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


# -- built-in scenarios ----------------------------------------------------

LOAD_GRID = [round(0.05 + i * (0.95 - 0.05) / 11, 6) for i in range(12)]
ALPHA = 0.1
# keeps a full run of every built-in within a few minutes on one core
BUILTIN_REPLICATIONS = 5
FALSE_BETAS = [optimal_claim(n, ALPHA) for n in (1, 2, 5)]


def _two(a1, a2, shares, **kw):
    return dict(classes=[ClassSpec("1", shares[0], list(a1)), ClassSpec("2", shares[1], list(a2))], **kw)


def _builtin_table():
    both = ["drf", "pf"]
    a1, a2 = [1.0, 0.1], [0.1, 1.0]
    four = [[1.0, 0.1], [1.0, 0.5], [0.5, 1.0], [0.1, 1.0]]
    table = {
        "fig1a": _two(a1, a2, (0.5, 0.5), policies=both),
        "fig1b": _two(a1, a2, (0.75, 0.25), policies=both),
        "fig2a": _two(a1, [0.5, 1.0], (0.5, 0.5), policies=both),
        "fig2b": _two(a1, [0.5, 1.0], (0.75, 0.25), policies=both),
        "fig3a": dict(classes=[ClassSpec(str(k + 1), 0.25, r) for k, r in enumerate(four)], policies=both),
        "fig3b": dict(classes=[ClassSpec(str(k + 1), s, r) for k, (s, r) in
                               enumerate(zip((0.375, 0.375, 0.125, 0.125), four))], policies=both),
        "fig4": dict(simulator="permanent", policies=["pf"], alpha=ALPHA,
                     betas=[ALPHA] + FALSE_BETAS, loads=[round(0.1 * i, 1) for i in range(1, 10)]),
    }
    for pol in ("drf", "pf"):
        table[f"fig5{pol}"] = _two([1.0, ALPHA], [ALPHA, 1.0], (0.5, 0.5), policies=[pol],
                                   claim_class=0,
                                   claim_variants=[[1.0, b] for b in [ALPHA] + FALSE_BETAS])
    for key, dist in (("fig6exp", "exponential"), ("fig6erlang", "erlang")):
        table[key] = dict(
            classes=[ClassSpec("1", 0.75, list(a1), sigma=500, tau=0.2),
                     ClassSpec("2", 0.25, list(a2), sigma=500, tau=0.2)],
            policies=both, simulator="task", capacity=[100.0, 100.0], distribution=dist,
            erlang_k=20, horizon_jobs=120)
    return table


BUILTINS = _builtin_table()


def builtin(name: str) -> ScenarioConfig:
    if name not in BUILTINS:
        raise ValidationError(f"unknown built-in scenario {name!r}")
    fields = dict(BUILTINS[name])
    fields.setdefault("loads", list(LOAD_GRID))
    fields.setdefault("replications", BUILTIN_REPLICATIONS)
    fields["classes"] = [ClassSpec(**asdict(c)) for c in fields.get("classes", [])]
    return ScenarioConfig(name=name, **fields)


# -- running ---------------------------------------------------------------

@dataclass
class ResultRow:
    scenario: str
    policy: str
    cls: str
    load: float
    gamma: float
    ci: float
    reps: int
    seed: int
    unstable: bool


def _classes_at(cfg: ScenarioConfig, load: float, claim=None):
    """Traffic classes whose resource-1 load equals ``load``."""
    caps = cfg.capacity or [1.0] * len(cfg.classes[0].demand)
    per_unit = sum(c.share * (c.demand[0] / caps[0]) * c.sigma * c.tau for c in cfg.classes)
    if per_unit <= 0:
        raise ValidationError(f"{cfg.name}: resource 1 carries no load")
    lam = load / per_unit
    out = []
    for k, c in enumerate(cfg.classes):
        cl = claim if (claim is not None and k == cfg.claim_class) else c.claim
        out.append(TrafficClass(lam * c.share, c.sigma, c.tau, tuple(c.demand),
                                tuple(cl) if cl is not None else None, c.name))
    return out


def _fmt_claim(row):
    return ";".join(f"{x:g}" for x in row)


def run_scenario(cfg: ScenarioConfig, seed: Optional[int] = None, reps: Optional[int] = None,
                 workers: int = 1, params: Optional[SolverParams] = None, progress=None) -> list:
    """Sweep the load grid for every policy and return one row per class and point."""
    seed = cfg.seed if seed is None else int(seed)
    reps = cfg.replications if reps is None else int(reps)
    if reps < 1:
        raise ValidationError("replications must be >= 1")
    rows = []

    if cfg.simulator == "permanent":
        for pname in cfg.policies:
            policy = Policy.parse(pname)
            for beta in cfg.betas:
                label = f"{policy}@beta={beta:.6g}"
                for li, rho2 in enumerate(cfg.loads):
                    unstable = rho2 >= 1
                    horizon = cfg.horizon_jobs / rho2
                    one = partial(simulate_permanent_job, cfg.alpha, beta, rho2, policy, horizon,
                                  cfg.warmup_fraction * horizon, params=params)
                    res = replicate(one, seed, reps, key=(li,), workers=workers)
                    rows.append(ResultRow(cfg.name, label, "1", rho2, res.gamma[0], res.ci[0],
                                          reps, seed, unstable))
                    if progress:
                        progress(cfg.name, label, rho2)
            if policy.kind == "pf":
                for beta in cfg.betas:
                    label = f"PF-analytic@beta={beta:.6g}"
                    for rho2 in cfg.loads:
                        g = gamma1_pf(cfg.alpha, beta, rho2) if rho2 < 1 else math.nan
                        rows.append(ResultRow(cfg.name, label, "1", rho2, g, 0.0, 0, seed, rho2 >= 1))
        return rows

    variants = list(cfg.claim_variants) or [None]
    dist = TaskDistribution(cfg.distribution, cfg.erlang_k if cfg.distribution == "erlang" else 1)
    caps = cfg.capacity or [1.0] * len(cfg.classes[0].demand)
    for pname in cfg.policies:
        policy = Policy.parse(pname)
        for claim in variants:
            label = str(policy) if claim is None else f"{policy}@claim={_fmt_claim(claim)}"
            for li, load in enumerate(cfg.loads):
                classes = _classes_at(cfg, load, claim)
                _, stable = capacity_region_check(classes, caps)
                horizon = cfg.horizon_jobs / sum(c.lam for c in classes)
                warm = cfg.warmup_fraction * horizon
                if cfg.simulator == "fluid":
                    one = partial(simulate_fluid, classes, policy, horizon, warm, params=params)
                else:
                    one = partial(simulate_tasks, classes, caps, policy, dist, horizon, warm,
                                  params=params, geometric_tasks=cfg.geometric_tasks)
                res = replicate(one, seed, reps, key=(li,), workers=workers)
                for k, c in enumerate(classes):
                    rows.append(ResultRow(cfg.name, label, c.name, load, res.gamma[k], res.ci[k],
                                          reps, seed, not stable))
                if progress:
                    progress(cfg.name, label, load)
    return rows


def _g6(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{float(x):.6g}"


def rows_to_csv(rows, cfg: ScenarioConfig, seed: int, reps: int) -> str:
    buf = io.StringIO()
    buf.write(f"# scenario: {cfg.name}\n")
    buf.write(f"# config-hash: {cfg.digest()}\n")
    buf.write(f"# seed: {seed}\n")
    buf.write(f"# replications: {reps}\n")
    buf.write(f"# tool: multifair {__version__}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.scenario, r.policy, r.cls, _g6(r.load), _g6(r.gamma), _g6(r.ci),
                    r.reps, r.seed, int(r.unstable)])
    return buf.getvalue()


def read_csv(path):
    """Parse a result CSV into ``(metadata, rows)``."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"{path}: missing scenario output")
    meta, body = {}, []
    with open(path) as fh:
        for ln in fh:
            if ln.startswith("#"):
                key, _, value = ln[1:].partition(":")
                meta[key.strip()] = value.strip()
            else:
                body.append(ln)
    reader = csv.DictReader(body)
    if reader.fieldnames != CSV_COLUMNS:
        raise ValidationError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
    rows = []
    for i, r in enumerate(reader, start=1):
        try:
            rows.append(ResultRow(r["scenario"], r["policy"], r["class"], float(r["load"]),
                                  float(r["gamma"]), float(r["ci"]), int(r["reps"]), int(r["seed"]),
                                  bool(int(r["unstable"]))))
        except ValueError as exc:
            raise ValidationError(f"{path}: data row {i}: {exc}") from None
    return meta, rows


def expected_keys(cfg: ScenarioConfig) -> set:
    """``(policy label, class, load)`` triples a complete run of ``cfg`` produces."""
    loads = [float(_g6(x)) for x in cfg.loads]
    keys = set()
    if cfg.simulator == "permanent":
        for pname in cfg.policies:
            policy = Policy.parse(pname)
            labels = [f"{policy}@beta={b:.6g}" for b in cfg.betas]
            if policy.kind == "pf":
                labels += [f"PF-analytic@beta={b:.6g}" for b in cfg.betas]
            keys |= {(lab, "1", x) for lab in labels for x in loads}
        return keys
    for pname in cfg.policies:
        policy = Policy.parse(pname)
        for claim in list(cfg.claim_variants) or [None]:
            label = str(policy) if claim is None else f"{policy}@claim={_fmt_claim(claim)}"
            keys |= {(label, c.name, x) for c in cfg.classes for x in loads}
    return keys
