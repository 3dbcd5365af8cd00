"""Run every preset (optionally scaled down) into results/<preset>/ and print
the headline numbers of each summary."""
import argparse
import json
from pathlib import Path

from adaptcov.harness.config import get_preset, presets
from adaptcov.harness.experiment import run, sweep
from adaptcov.runtime import tune_allocator


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", type=int, default=10, help="divide step counts by K")
    ap.add_argument("--out", default="results")
    ap.add_argument("names", nargs="*", default=sorted(presets()))
    args = ap.parse_args()
    tune_allocator()
    for name in args.names:
        cfg = get_preset(name, scale=args.scale)
        out = Path(args.out) / name
        res = sweep(cfg, out) if cfg.sweep else {name: run(cfg, out)}
        for cell, summary in res.items():
            keys = ("mrrmse", "mrmse", "q1", "q2", "r", "status")
            print(cell, json.dumps({k: summary[k] for k in keys if k in summary}))


if __name__ == "__main__":
    main()
