"""Run the full command chain on a synthetic market.

Usage: python scripts/run_demo.py [demo/] [--seed 7]

Prepares the directory with make_synthetic_data if no run.cfg exists,
then runs ingest, backtest, train, eval, regress, and report in order,
stopping on the first nonzero exit code.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import make_synthetic_data

from sigblend.cli import main as sigblend


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("directory", nargs="?", type=Path, default=Path("demo"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    cfg = args.directory / "run.cfg"
    if not cfg.exists():
        cfg = make_synthetic_data.build(args.directory, args.seed, days=150)

    out = args.directory / "out"
    steps = [
        ["ingest", "--config", str(cfg)],
        ["backtest", "--config", str(cfg)],
        ["train", "--config", str(cfg)],
        ["eval", "--config", str(cfg), "--checkpoint", str(out / "train" / "checkpoint_final.bin")],
        ["regress", "--config", str(cfg), "--report", str(out / "backtest" / "sw_0.5")],
        ["regress", "--config", str(cfg), "--report", str(out / "eval")],
        ["report", "--config", str(cfg)],
    ]
    for step in steps:
        print(f"$ sigblend {' '.join(step)}")
        code = sigblend(step)
        if code != 0:
            print(f"step failed with exit code {code}", file=sys.stderr)
            return code
    print(f"\nall artifacts under {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
