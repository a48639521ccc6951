"""Command-line interface: measure, scatter, border, evolve, verify.

Exit codes: 0 success, 1 verification failure, 2 usage or input error,
3 state-invariant violation, 4 numerical failure. Data goes to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics, oracle, refstate, sampling
from .errors import (
    ConfigError,
    InvalidState,
    PositivityViolation,
    StateFileError,
    WdelocError,
)
from .sxstate import load_state

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INVARIANT, EXIT_NUMERIC = 0, 1, 2, 3, 4
SUITES = ("reference", "overlap", "weights", "all")


class UsageError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"wdeloc: {msg}", file=sys.stderr)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("WDELOC_THREADS")
    if env is None:
        return 1
    try:
        t = int(env)
    except ValueError:
        raise UsageError(f"WDELOC_THREADS must be an integer, got {env!r}") from None
    if t < 1:
        raise UsageError("WDELOC_THREADS must be >= 1")
    return t


def _out_path(path: str | None) -> Path | None:
    """Relative output paths resolve against WDELOC_OUTDIR when it is set."""
    if path is None or path == "-":
        return None
    p = Path(path)
    outdir = os.environ.get("WDELOC_OUTDIR")
    if outdir and not p.is_absolute():
        p = Path(outdir) / p
    if not p.parent.is_dir():
        raise UsageError(f"output directory {p.parent} does not exist")
    return p


def _write_csv(header, rows, stream) -> None:
    stream.write(",".join(header) + "\n")
    for row in np.asarray(rows).tolist():
        stream.write(",".join(repr(float(x)) for x in row) + "\n")


# -- subcommands -----------------------------------------------------------------

def cmd_measure(args) -> int:
    rho = load_state(args.state_file)
    if args.k_max is not None and args.k_max < 2:
        raise UsageError("--k-max must be >= 2")
    prof = refstate.delocalization_profile(rho, args.k_max, clamp=not args.no_clamp)
    print(json.dumps(prof.to_dict(), indent=2))
    return EXIT_OK


def cmd_scatter(args) -> int:
    try:
        cfg = sampling.SamplerConfig.from_kind(args.n, args.kind, args.seed, args.samples)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not 2 <= args.k <= args.n:
        raise UsageError(f"--k must lie in [2, {args.n}]")
    out = _out_path(args.out)
    chunks = sampling.iter_scatter(cfg, args.k, threads=_threads(args))
    if out is None:
        stream = sys.stdout if args.format == "csv" else sys.stdout.buffer
        sampling.write_cloud(chunks, stream, args.format)
        stream.flush()
        return EXIT_OK
    mode = "w" if args.format == "csv" else "wb"
    with open(out, mode) as fh:
        rows = sampling.write_cloud(chunks, fh, args.format)
    Path(str(out) + ".json").write_text(sampling.sidecar(cfg, args.k, args.format) + "\n")
    _err(f"wrote {rows} points to {out}")
    return EXIT_OK


def cmd_border(args) -> int:
    if args.grid < 2:
        raise UsageError("--grid must be >= 2")
    if not 2 <= args.k <= args.n:
        raise UsageError(f"--k must lie in [2, {args.n}]")
    plan = refstate.partition_plan(args.n, args.k)
    grid = np.linspace(refstate.min_purity(plan), 1.0, args.grid)
    grid[-1] = 1.0
    if args.fit:
        fb = refstate.fitted_border(args.n, args.k, args.samples, args.seed,
                                    threads=_threads(args))
        vals = fb(grid)
    elif plan.method == "closed-form" or args.numeric:
        vals = refstate.border_values(args.n, args.k, grid,
                                      method="numeric" if args.numeric else "auto")
    else:
        raise UsageError(
            f"(n, k) = ({args.n}, {args.k}) has no closed-form reference weights; "
            "rerun with --numeric for the optimized border or --fit for a sampled one"
        )
    out = _out_path(args.out)
    if out is None:
        _write_csv(["purity", "tau"], np.column_stack([grid, vals]), sys.stdout)
    else:
        with open(out, "w") as fh:
            _write_csv(["purity", "tau"], np.column_stack([grid, vals]), fh)
    return EXIT_OK


def _parse_sets(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def cmd_evolve(args) -> int:
    if args.config in dynamics.PRESETS:
        cfg, base = dynamics.PRESETS[args.config], None
    else:
        cfg, base = dynamics.load_config(args.config), Path(args.config).parent
    overrides = _parse_sets(args.set)
    if overrides:
        cfg = dynamics.config_from_dict({**cfg.to_dict(), **overrides})
    traj = dynamics.run_config(cfg, base_dir=base)
    header, rows = dynamics.trajectory_table(traj)
    out = _out_path(args.out)
    if out is None:
        _write_csv(header, rows, sys.stdout)
    else:
        with open(out, "w") as fh:
            _write_csv(header, rows, fh)
    return EXIT_OK


def run_suites(suite: str, seed: int, budget: int, points: int, trials: int,
               threads: int) -> dict:
    names = ("reference", "overlap", "weights") if suite == "all" else (suite,)
    reports = {}
    for name in names:
        if name == "reference":
            reports[name] = oracle.dominance_check(points=points, budget=budget, seed=seed,
                                                   threads=threads)
        elif name == "overlap":
            reports[name] = oracle.overlap_suite(trials=trials, seed=seed)
        else:
            reports[name] = oracle.weight_consistency_check(
                oracle.default_weight_plans(), np.linspace(0.0, 1.0, 101))
    return reports


def cmd_verify(args) -> int:
    if args.budget < 1000:
        raise UsageError("--budget must be >= 1000")
    reports = run_suites(args.suite, args.seed, args.budget, args.points, args.trials,
                         _threads(args))
    passed = all(r.passed for r in reports.values())
    payload = {"passed": passed, "reports": {k: r.to_dict() for k, r in reports.items()}}
    print(json.dumps(payload, indent=2, default=float))
    for name, r in reports.items():
        if not r.passed:
            _err(f"{name} failed: max violation {r.max_violation:.3g} > {r.tolerance:g}; "
                 f"worst case {json.dumps(r.worst_case, default=float)}")
    return EXIT_OK if passed else EXIT_VERIFY


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wdeloc",
                                description="Multipartite delocalization of single-excitation states.")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (env WDELOC_THREADS); output does not depend on it")
    sub = p.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="delocalization profile of a state file as JSON")
    m.add_argument("state_file")
    m.add_argument("--k-max", type=int, default=None)
    m.add_argument("--no-clamp", action="store_true",
                   help="report negative E_k instead of clamping at zero")
    m.set_defaults(func=cmd_measure)

    s = sub.add_parser("scatter", help="(purity, tau_k) cloud of random states")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--kind", default="mixed",
                   help="pure | diagonal | mixed[:rank] | producible:block[:components]")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None, help="output file (stdout if omitted)")
    s.add_argument("--format", choices=("csv", "bin"), default="csv")
    s.set_defaults(func=cmd_scatter)

    b = sub.add_parser("border", help="reference border tau_k(sigma) vs purity as CSV")
    b.add_argument("--n", type=int, required=True)
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--grid", type=int, default=101)
    g = b.add_mutually_exclusive_group()
    g.add_argument("--numeric", action="store_true",
                   help="optimize the remainder weight numerically")
    g.add_argument("--fit", action="store_true", help="fit the border from sampled states")
    b.add_argument("--samples", type=int, default=100_000, help="samples for --fit")
    b.add_argument("--seed", type=int, default=0, help="seed for --fit")
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_border)

    e = sub.add_parser("evolve", help="propagate a master equation and emit E_k(t) as CSV")
    e.add_argument("--config", default="ring6", help="preset name (ring6) or JSON config path")
    e.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. --set omega_c=50")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_evolve)

    v = sub.add_parser("verify", help="run brute-force oracle suites")
    v.add_argument("--suite", choices=SUITES, default="all")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--budget", type=int, default=100_000)
    v.add_argument("--points", type=int, default=10, help="purity points per reference case")
    v.add_argument("--trials", type=int, default=10_000, help="trials per overlap (k, m)")
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except (UsageError, StateFileError, ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except InvalidState as exc:
        _err(f"invalid state: {exc}")
        return EXIT_INVARIANT
    except PositivityViolation as exc:
        _err(f"{exc} (try halving it)")
        return EXIT_NUMERIC
    except (WdelocError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
