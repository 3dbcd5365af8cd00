"""Command line entry point: simulate, run, sweep, bench."""
import argparse
import json
import sys
from pathlib import Path

from ..errors import InvalidInput
from ..runtime import tune_allocator
from .bench import bench_complexity
from .config import ConfigError, get_preset, load, presets
from .experiment import run, simulate_to, sweep


def _config(args):
    base = get_preset(args.preset, args.scale) if args.preset else None
    if args.config:
        cfg = load(args.config, base)
    elif base is not None:
        cfg = base
    else:
        raise ConfigError("give --config PATH or --preset NAME")
    if args.scale != 1 and (base is None or args.config):
        cfg.steps = max(1, cfg.steps // args.scale)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    return cfg.validate()


def build_parser():
    p = argparse.ArgumentParser(prog="adaptcov", description="Adaptive Q/R estimation experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("simulate", "write truth and observations"), ("run", "run one experiment"),
                        ("sweep", "run every cell of a sweep grid")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", type=Path)
        s.add_argument("--preset", choices=sorted(presets()))
        s.add_argument("--seed", type=int)
        s.add_argument("--out", type=str)
        s.add_argument("--scale", type=int, default=1, help="divide step counts by K")
    b = sub.add_parser("bench", help="estimator cost scaling in m")
    b.add_argument("--m", type=int, nargs="+", default=[10, 20, 40, 80])
    b.add_argument("--Np", type=int, default=4)
    b.add_argument("--L", type=int, default=1)
    b.add_argument("--reps", type=int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", type=str)
    return p


def main(argv=None):
    tune_allocator()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bench":
            res = bench_complexity(args.m, args.Np, args.L, args.reps, seed=args.seed)
            sys.stdout.write(res.table())
            print(json.dumps({"slopes": res.slopes}))
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "bench.csv").write_text(res.table(), encoding="utf-8")
            return 0
        if args.scale < 1:
            raise ConfigError("must be >= 1", key="--scale")
        cfg = _config(args)
        if args.command == "simulate":
            simulate_to(cfg)
            print(f"wrote {cfg.out}/truth.csv and {cfg.out}/observations.csv")
        elif args.command == "run":
            print(json.dumps(run(cfg), indent=2, sort_keys=True))
        else:
            for cell, summary in sweep(cfg).items():
                print(cell, json.dumps(summary, sort_keys=True))
    except (InvalidInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
