"""Command-line entry point: ``multihop-aoi {run,sweep,reproduce,verify}``.

Exit codes: 0 success, 2 configuration/validation error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .distributions import DistributionError
from .network import TopologyError
from .policies import PolicyError
from .traffic import TrafficError

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 2, 3


def _apply_overrides(cfg, args):
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["replications"] = args.reps
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    return replace(cfg, **changes) if changes else cfg


def _log(msg):
    print(msg, file=sys.stderr)


def cmd_run(args, need_sweep=False) -> int:
    cfg = _apply_overrides(ex.parse_config(args.config), args)
    if need_sweep and cfg.sweep is None:
        raise ex.ConfigError("sweep needs a 'sweep' section in the configuration")
    if not need_sweep and cfg.sweep is not None and not args.allow_sweep:
        cfg = replace(cfg, sweep=None)
    res = ex.run_experiment(cfg, progress=_log if args.verbose else None)
    for f in ex.write_results(res, args.out):
        print(f)
    return EXIT_OK


def cmd_reproduce(args) -> int:
    kw = {}
    if args.horizon is not None:
        kw["horizon"] = args.horizon
    if args.reps is not None:
        kw["replications"] = args.reps
    if args.seed is not None:
        kw["seed"] = args.seed
    cfg = ex.PRESETS[args.preset](**kw)
    res = ex.run_experiment(cfg, progress=_log if args.verbose else None)
    for f in ex.write_results(res, Path(args.out) / args.preset):
        print(f)
    return EXIT_OK


def cmd_verify(args) -> int:
    verdicts = ex.verify_battery(
        seeds=args.seeds, horizon=args.horizon or 1000.0, lam=args.lam,
        seed=args.seed or 0, inverted=args.inverted,
    )
    ok = True
    for v in verdicts:
        r = v.report
        status = "PASS" if v.passed else "FAIL"
        print(f"{status}  {v.name}: {r.violations} violations over {r.checked} comparisons")
        ok = ok and v.passed
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        data = [
            {"name": v.name, "passed": v.passed, "violations": v.report.violations,
             "checked": v.report.checked, "examples": v.report.examples}
            for v in verdicts
        ]
        (Path(args.out) / "verify.json").write_text(json.dumps(data, indent=1) + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multihop-aoi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment configuration (JSON)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--reps", type=int, help="replications")
        sp.add_argument("--horizon", type=float)
        sp.add_argument("--out", default="results")
        sp.add_argument("-v", "--verbose", action="store_true")

    r = sub.add_parser("run", help="run a configuration (sweep section ignored unless --allow-sweep)")
    common(r)
    r.add_argument("--allow-sweep", action="store_true")
    s = sub.add_parser("sweep", help="run a configuration over its sweep grid")
    common(s)
    rp = sub.add_parser("reproduce", help="figure presets")
    rp.add_argument("preset", choices=sorted(ex.PRESETS))
    common(rp, config=False)
    v = sub.add_parser("verify", help="coupled samplewise dominance battery")
    v.add_argument("--seeds", type=int, default=100)
    v.add_argument("--lam", type=float, default=1.0)
    v.add_argument("--inverted", action="store_true", help="FCFS as the candidate optimum (expects violations)")
    v.add_argument("--seed", type=int)
    v.add_argument("--horizon", type=float)
    v.add_argument("--out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "sweep":
            args.allow_sweep = True
            return cmd_run(args, need_sweep=True)
        if args.command == "reproduce":
            return cmd_reproduce(args)
        return cmd_verify(args)
    except (ex.ConfigError, TopologyError, DistributionError, PolicyError, TrafficError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
