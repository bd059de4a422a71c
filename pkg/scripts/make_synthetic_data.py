"""Write a ready-to-run synthetic market and config into a directory.

Usage: python scripts/make_synthetic_data.py demo/ [--seed 7] [--days 150]

Creates prices.csv / sentiment.csv / factors.csv plus a run.cfg whose RL
windows are picked from the actual post-warm-up calendar, so every
``sigblend`` subcommand works on the directory as-is.
"""

import argparse
from pathlib import Path

from sigblend.indicators import build_features
from sigblend.market_data import load_prices, load_sentiment
from sigblend.synthetic import MarketSpec, write_market

CONFIG_TEMPLATE = """\
# synthetic demo market (seed {seed}); see README.md for the full schema
prices = prices.csv
sentiment = sentiment.csv
factors = factors.csv
out = out
seed = {seed}

strategy.sentiment_weights = 0.0, 0.5, 1.0
strategy.tcost_bps = 5

rl.train_start = {train_start}
rl.train_end = {train_end}
rl.test_start = {test_start}
rl.test_end = {test_end}
rl.tcost_bps = 10
# demo-scaled networks and schedule; production defaults are 256,256 / 512
rl.hidden = 32,32
rl.epochs = 60
rl.checkpoint_every = 20
"""


def build(outdir: Path, seed: int, days: int) -> Path:
    spec = MarketSpec(
        n_days=days,
        drift={"ALFA": 0.001},
        planted_sentiment={"ALFA": ("Positive", 0.8)},
    )
    write_market(outdir, spec, seed=seed)
    panel = load_sentiment(outdir / "sentiment.csv", load_prices(outdir / "prices.csv"))
    dates = build_features(panel).dates
    split = int(len(dates) * 0.7)
    cfg_path = outdir / "run.cfg"
    cfg_path.write_text(
        CONFIG_TEMPLATE.format(
            seed=seed,
            train_start=dates[0],
            train_end=dates[split],
            test_start=dates[split],
            test_end=dates[-1],
        ),
        encoding="utf-8",
    )
    return cfg_path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("outdir", type=Path, help="directory to create the fixture in")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--days", type=int, default=150)
    args = parser.parse_args(argv)
    cfg = build(args.outdir, args.seed, args.days)
    print(f"wrote market + {cfg}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
