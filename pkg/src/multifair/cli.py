"""Command line: list, dump and run scenarios, and verify acceptance criteria.

Exit codes: 0 success, 1 validation error, 2 acceptance failure,
3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .errors import ConvergenceError, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_CONVERGENCE = 0, 1, 2, 3


def _list(args):
    from .scenarios import BUILTINS, builtin
    for name in BUILTINS:
        cfg = builtin(name)
        print(f"{name:12s} {cfg.simulator:9s} policies={','.join(cfg.policies)} loads={len(cfg.loads)}")
    return EXIT_OK


def _dump(args):
    from .scenarios import builtin, dump_config
    text = dump_config(builtin(args.name))
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _run(args):
    from .scenarios import load_config, rows_to_csv, run_scenario
    cfg = load_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    reps = cfg.replications if args.reps is None else args.reps

    def progress(name, label, load):
        if not args.quiet:
            print(f"{name} {label} load={load:g}", file=sys.stderr)

    rows = run_scenario(cfg, seed=seed, reps=reps, workers=args.workers, progress=progress)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    out.write_text(rows_to_csv(rows, cfg, seed, reps))
    if not args.quiet:
        print(f"wrote {len(rows)} rows to {out}", file=sys.stderr)
    return EXIT_OK


def _verify(args):
    from .acceptance import check_results, default_criteria, load_criteria, verify
    from .scenarios import load_config, read_csv
    cfg = load_config(args.config)
    if args.criteria in (None, "default"):
        criteria = default_criteria(cfg.seed if args.seed is None else args.seed)
    else:
        criteria = load_criteria(args.criteria)
    checks = []
    if args.results:
        meta, rows = read_csv(args.results)
        for c in check_results(cfg, meta, rows):
            print(c.line())
            checks.append(c)
    checks += verify(criteria)
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def _criteria(args):
    from .acceptance import CRITERIA
    for name, c in CRITERIA.items():
        params = ", ".join(f"{k}={v}" for k, v in c.defaults.items())
        print(f"{c.number:2d} {name:28s} {c.doc}\n   {params}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multifair", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"multifair {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("list-scenarios", help="list built-in scenarios")
    sp.set_defaults(func=_list)

    sp = sub.add_parser("dump-config", help="print a built-in scenario as TOML")
    sp.add_argument("name")
    sp.add_argument("--out", help="write to this file instead of stdout")
    sp.set_defaults(func=_dump)

    sp = sub.add_parser("run", help="sweep a scenario and write CSV")
    sp.add_argument("config", help="built-in name or TOML file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, help="master seed (default: from the config)")
    sp.add_argument("--reps", type=int, help="replications per point (default: from the config)")
    sp.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=_run)

    sp = sub.add_parser("verify", help="evaluate acceptance criteria")
    sp.add_argument("config", help="built-in name or TOML file")
    sp.add_argument("--criteria", help="criteria TOML file, or 'default' for all criteria")
    sp.add_argument("--results", help="CSV written by 'run' for this config, checked for completeness")
    sp.add_argument("--seed", type=int, help="master seed for the default criteria")
    sp.set_defaults(func=_verify)

    sp = sub.add_parser("list-criteria", help="list acceptance criteria and their parameters")
    sp.set_defaults(func=_criteria)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConvergenceError as exc:
        where = f" at t={exc.time:g}" if exc.time is not None else ""
        print(f"error: solver did not converge{where}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
