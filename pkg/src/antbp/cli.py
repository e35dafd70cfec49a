"""Command line entry point: run, sweep, check, plot.

Exit codes: 0 ok, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import filecmp
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import outputs
from .config import ConfigError, ScenarioConfig, load_config
from .simulation import run_scenario
from .sweep import run_sweep

OUTPUT_ENV = "ANTBP_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("antbp")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def _parse_value(s: str):
    try:
        return float(s) if any(ch in s for ch in ".eE") else int(s)
    except ValueError:
        return s


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    seed = cfg.replication.seed if args.seed is None else args.seed
    out = Path(args.out) if args.out else output_root() / f"{Path(args.config).stem}-{cfg.policy.kind}-seed{seed}"
    res = run_scenario(cfg, seed, debug=args.debug or None)
    outputs.emit_run(res, cfg, out)
    m = res.metrics
    print(f"{out}: delivered {m.delivered}/{m.injected}, latency {m.latency:.3f}, goodput {m.goodput:.3f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = [_parse_value(v) for v in args.values.split(",") if v.strip()] if args.values else []
    seeds = list(range(cfg.replication.seed, cfg.replication.seed + args.seeds))
    policies = [p.strip() for p in args.policies.split(",")] if args.policies else None
    for p in policies or []:
        cfg.replace(**{"policy.kind": p})
    rows = run_sweep(cfg, args.axis, values, seeds, policies, args.workers)
    out = Path(args.out) if args.out else output_root() / f"{Path(args.config).stem}-sweep"
    out.mkdir(parents=True, exist_ok=True)
    outputs.write_sweep(rows, out / "sweep.csv", args.axis)
    outputs.write_summary(outputs.summarize(rows), out / "summary.csv")
    failed = sum(1 for r in rows if r.get("error"))
    print(f"{out}: {len(rows)} cells, {failed} failed")
    return EXIT_RUNTIME if failed else EXIT_OK


def audit_run(run_dir) -> list[str]:
    """Offline checks on a run directory; returns a list of problems."""
    run_dir = Path(run_dir)
    problems = []
    for name in ("manifest.json", "packets.csv", "slots.csv", "events.csv", "topology.txt"):
        if not (run_dir / name).exists():
            problems.append(f"missing {name}")
    if problems:
        return problems
    man = outputs.read_manifest(run_dir)
    horizon = man["config"]["traffic"]["horizon"]
    slots = outputs.read_csv(run_dir / "slots.csv")
    if len(slots) != horizon:
        problems.append(f"slots.csv has {len(slots)} rows, expected {horizon}")
    inj = np.array([int(r["injected"]) for r in slots])
    dlv = np.array([int(r["delivered"]) for r in slots])
    blg = np.array([int(r["backlog"]) for r in slots])
    bad = np.flatnonzero(np.cumsum(inj) - np.cumsum(dlv) != blg)
    if bad.size:
        problems.append(f"packet conservation fails from slot {int(bad[0])}")
    pk = outputs.read_csv(run_dir / "packets.csv")
    injected_at = np.array([int(r["injected_at"]) for r in pk], dtype=np.int64)
    delivered_at = np.array([int(r["delivered_at"]) for r in pk], dtype=np.int64)
    done = delivered_at >= 0
    if np.any(delivered_at[done] <= injected_at[done]):
        problems.append("a packet was delivered no later than its injection slot")
    if int(done.sum()) != int(dlv.sum()):
        problems.append("packet and slot traces disagree on deliveries")
    if len(pk) != int(inj.sum()):
        problems.append("packet and slot traces disagree on injections")
    return problems


def cmd_check(args) -> int:
    problems = audit_run(args.run_dir)
    if not problems and args.rerun:
        man = outputs.read_manifest(args.run_dir)
        cfg = ScenarioConfig.from_dict(man["config"])
        with tempfile.TemporaryDirectory() as tmp:
            outputs.emit_run(run_scenario(cfg, man["seed"], debug=True), cfg, tmp)
            for name in ("packets.csv", "slots.csv", "events.csv", "topology.txt"):
                if not filecmp.cmp(Path(tmp) / name, Path(args.run_dir) / name, shallow=False):
                    problems.append(f"re-run differs in {name}")
    for p in problems:
        print(f"FAIL {p}")
    if problems:
        return EXIT_RUNTIME
    print(f"OK {args.run_dir}")
    return EXIT_OK


def cmd_plot(args) -> int:
    path = Path(args.csv)
    rows = outputs.read_csv(path)
    header = set(rows[0]) if rows else set()
    out = Path(args.out) if args.out else path.parent
    if "injected_at" in header:
        files = [outputs.plot_delay_bins(path, out / "delay_bins.png")]
    elif "seed" in header:
        summary = out / "summary.csv"
        outputs.write_summary(outputs.summarize(rows), summary)
        files = outputs.plot_sweep(summary, out)
    else:
        files = outputs.plot_sweep(path, out)
    for f in files:
        print(f)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="antbp", description="Ant backpressure routing simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario and write its traces")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--debug", action="store_true", help="assert per-slot invariants")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one config key over values, policies and seeds")
    s.add_argument("config")
    s.add_argument("--axis", help="section.key, e.g. traffic.load_bursty")
    s.add_argument("--values", default="", help="comma separated values")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--policies", help="comma separated policy kinds")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    c = sub.add_parser("check", help="audit a run directory")
    c.add_argument("run_dir")
    c.add_argument("--rerun", action="store_true", help="re-run with invariant checks and compare bytes")
    c.set_defaults(func=cmd_check)

    pl = sub.add_parser("plot", help="plot a sweep or summary CSV, or a packets.csv")
    pl.add_argument("csv")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if getattr(args, "config", None) and not Path(args.config).exists() else EXIT_RUNTIME
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
