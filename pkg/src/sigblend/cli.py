"""Command-line interface.

Subcommands::

    ingest    validate input files and write a panel summary
    backtest  rule-based quintile strategies, one report per blend weight
    train     TD3 training over the configured train window
    eval      greedy out-of-sample evaluation vs buy-and-hold benchmark
    regress   factor regression of a written report's returns
    report    consolidated metrics table across written summaries

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every
command echoes the resolved config into the output directory, and the
same inputs + config + seed reproduce every artifact byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__, backtest, factors, signals, td3
from .config import RunConfig, config_hash, load_run_config, render_config
from .env import EnvConfig, FeatureScaler, PortfolioEnv
from .errors import ConfigError, SigblendError
from .indicators import build_features
from .market_data import load_factors, load_prices, load_sentiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigblend",
        description="Blended sentiment/technical trading strategies and a TD3 allocator.",
    )
    parser.add_argument("--version", action="version", version=f"sigblend {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to a key=value config file")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        return cmd

    add("ingest", "validate inputs and summarize the panel")
    add("backtest", "run the rule-based strategies")
    train_cmd = add("train", "train the TD3 allocator")
    train_cmd.add_argument("--resume", default=None, help="checkpoint to continue from")
    eval_cmd = add("eval", "evaluate a trained policy out of sample")
    eval_cmd.add_argument("--checkpoint", required=True, help="agent checkpoint to evaluate")
    regress_cmd = add("regress", "factor-regress a written report")
    regress_cmd.add_argument(
        "--report", required=True, help="report directory containing nav.csv"
    )
    add("report", "gather written summaries into one table")
    return parser


def _echo_config(cfg: RunConfig) -> None:
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config_echo.txt").write_text(render_config(cfg), encoding="utf-8")


def _load_panel(cfg: RunConfig):
    panel = load_prices(cfg.prices)
    if cfg.sentiment is not None:
        panel = load_sentiment(cfg.sentiment, panel)
    return panel


def cmd_ingest(cfg: RunConfig, args) -> int:
    panel = _load_panel(cfg)
    summary = {
        "tickers": list(panel.tickers),
        "days": panel.n_days,
        "bars": panel.n_bars,
        "first_date": panel.dates[0].isoformat(),
        "last_date": panel.dates[-1].isoformat(),
        "rejected_tickers": [
            {"ticker": r.ticker, "days_present": r.days_present, "days_expected": r.days_expected}
            for r in panel.rejected_tickers
        ],
        "sentiment_records": len(panel.sentiment),
        "sentiment_dropped": panel.sentiment_dropped,
        "factor_rows": len(load_factors(cfg.factors)) if cfg.factors is not None else 0,
        "fingerprint": panel.fingerprint(),
    }
    _echo_config(cfg)
    out = cfg.out / "panel_summary.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"panel: {panel.n_tickers} tickers x {panel.n_days} days -> {out}")
    return 0


def _weight_label(weight: float) -> str:
    return f"sw_{weight:g}"


def cmd_backtest(cfg: RunConfig, args) -> int:
    panel = _load_panel(cfg)
    features = build_features(panel)
    cost = backtest.CostModel(cfg.strategy.tcost_bps, cfg.strategy.borrow_bps)
    _echo_config(cfg)
    for weight in cfg.strategy.sentiment_weights:
        combo = signals.CombinerConfig(
            sentiment_weight=weight, quintile_count=cfg.strategy.quintile_count
        )
        frames = signals.build_signal_frames(panel, features, combo)
        if cfg.strategy.long_only:
            report = backtest.run_long_only(panel, frames, cost, cfg.strategy.initial_capital)
        else:
            report = backtest.run_long_short(panel, frames, cost)
        outdir = cfg.out / "backtest" / _weight_label(weight)
        report.write(outdir)
        signals.write_signal_frames(frames, outdir / "signals.csv")
        print(f"{_weight_label(weight)}: final nav {report.nav[-1]:.6f} -> {outdir}")
    return 0


def _rl_windows(cfg: RunConfig, features) -> tuple:
    rl = cfg.rl
    if rl.train_start is None or rl.train_end is None:
        raise ConfigError("rl.train_start/rl.train_end must be set for this command")
    for name, day in (
        ("rl.train_start", rl.train_start),
        ("rl.train_end", rl.train_end),
    ):
        if day not in features.date_index:
            raise ConfigError(f"{name} {day} is not a post-warm-up trading day")
    return rl.train_start, rl.train_end


def cmd_train(cfg: RunConfig, args) -> int:
    panel = _load_panel(cfg)
    features = build_features(panel)
    train_start, train_end = _rl_windows(cfg, features)
    scaler = FeatureScaler.fit(panel, features, train_start, train_end)
    env = PortfolioEnv(panel, features, scaler, train_start, train_end, cfg.rl.env_config())
    _echo_config(cfg)
    provenance = {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "panel_fingerprint": panel.fingerprint(),
        "train_start": train_start.isoformat(),
        "train_end": train_end.isoformat(),
    }
    result = td3.train(
        env,
        cfg.rl.td3,
        out_dir=cfg.out / "train",
        resume=args.resume,
        provenance=provenance,
    )
    final = result.log[-1]
    print(
        f"trained {len(result.log)} epochs; final episode return "
        f"{final['episode_return']:.6f}, eval nav {final['eval_nav']:.2f} -> {cfg.out / 'train'}"
    )
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    panel = _load_panel(cfg)
    features = build_features(panel)
    rl = cfg.rl
    if rl.test_start is None or rl.test_end is None:
        raise ConfigError("rl.test_start/rl.test_end must be set for eval")
    for name, day in (("rl.test_start", rl.test_start), ("rl.test_end", rl.test_end)):
        if day not in features.date_index:
            raise ConfigError(f"{name} {day} is not a post-warm-up trading day")
    agent, scaler, meta = td3.load_agent_checkpoint(args.checkpoint)
    env = PortfolioEnv(panel, features, scaler, rl.test_start, rl.test_end, rl.env_config())
    if agent.state_dim != env.state_dim or agent.action_dim != env.action_dim:
        raise SigblendError(
            f"checkpoint dims ({agent.state_dim}, {agent.action_dim}) do not match "
            f"panel environment ({env.state_dim}, {env.action_dim})"
        )
    # test_start == train_end is the canonical walk-forward split: the last
    # training return is earned into train_end, the first test decision is
    # made at its close. Only an earlier start leaks training days.
    trained = meta.get("provenance", {})
    if trained.get("train_end") and rl.test_start.isoformat() < trained["train_end"]:
        print(
            f"warning: eval window starting {rl.test_start} overlaps the "
            f"training window ending {trained['train_end']}",
            file=sys.stderr,
        )
    _echo_config(cfg)
    outdir = cfg.out / "eval"
    outdir.mkdir(parents=True, exist_ok=True)
    records = td3.rollout(agent, env)
    report = td3.report_from_records(records, env)
    report.write(outdir)
    td3.write_trajectory(records, env.weight_labels, outdir / "trajectory.csv")
    bench = td3.buy_and_hold_report(panel, rl.test_start, rl.test_end, rl.initial_value)
    bench.write(outdir / "benchmark")
    _write_comparison(report, bench, outdir)
    print(
        f"eval: policy nav {report.nav[-1]:.2f} vs benchmark {bench.nav[-1]:.2f} -> {outdir}"
    )
    return 0


_COMPARISON_ROWS = (
    ("ann_return", "annualized return"),
    ("ann_vol", "annualized volatility"),
    ("sharpe", "sharpe ratio"),
    ("sortino", "sortino ratio"),
    ("max_drawdown", "max drawdown"),
    ("ann_turnover", "annualized turnover"),
)


def _write_comparison(policy: backtest.BacktestReport, bench: backtest.BacktestReport, outdir: Path):
    rows = []
    pol, ben = policy.summary().to_dict(), bench.summary().to_dict()
    for key, label in _COMPARISON_ROWS:
        rows.append((label, pol[key], ben[key]))
    with open(outdir / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "policy", "benchmark"])
        for label, p, b in rows:
            writer.writerow([label, _cell(p), _cell(b)])
    lines = [f"{'metric':<24}{'policy':>16}{'benchmark':>16}"]
    for label, p, b in rows:
        lines.append(f"{label:<24}{_fmt(p):>16}{_fmt(b):>16}")
    (outdir / "comparison.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cell(value) -> str:
    return "inf" if value is None else repr(float(value))


def _fmt(value) -> str:
    return "inf" if value is None else f"{value:.6f}"


def cmd_regress(cfg: RunConfig, args) -> int:
    if cfg.factors is None:
        raise ConfigError("a factors file is required for regress")
    factor_rows = load_factors(cfg.factors)
    report_dir = Path(args.report)
    dates, returns = backtest.read_report_returns(report_dir)
    holder = _ReturnsHolder(dates, returns)
    result = factors.decompose_strategy(holder, factor_rows)
    _echo_config(cfg)
    outdir = cfg.out / "regress" / report_dir.name
    outdir.mkdir(parents=True, exist_ok=True)
    factors.write_regression(result, outdir / "regression.csv", outdir / "regression.txt")
    alpha = result.coefficients[0]
    print(f"alpha {alpha:.6e}/day (r2 {result.r_squared:.4f}) -> {outdir}")
    return 0


class _ReturnsHolder:
    """Minimal report shim: the regression only needs dates and returns."""

    def __init__(self, dates, daily_return):
        self.dates = dates
        self.daily_return = daily_return


def cmd_report(cfg: RunConfig, args) -> int:
    _echo_config(cfg)
    rows = []
    for summary_path in sorted(cfg.out.rglob("summary.json")):
        with open(summary_path, encoding="utf-8") as fh:
            payload = json.load(fh)
        label = summary_path.parent.relative_to(cfg.out)
        metrics = payload.get("metrics", {})
        rows.append((str(label), payload.get("kind", "?"), metrics))
    outdir = cfg.out / "report"
    outdir.mkdir(parents=True, exist_ok=True)
    keys = ["ann_return", "ann_vol", "sharpe", "sortino", "max_drawdown", "ann_turnover"]
    with open(outdir / "summary_table.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "kind"] + keys)
        for label, kind, metrics in rows:
            writer.writerow([label, kind] + [_cell(metrics.get(k)) for k in keys])
    lines = [f"{'run':<32}{'kind':<12}" + "".join(f"{k:>16}" for k in keys)]
    for label, kind, metrics in rows:
        lines.append(
            f"{label:<32}{kind:<12}" + "".join(f"{_fmt(metrics.get(k)):>16}" for k in keys)
        )
    (outdir / "summary_table.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"{len(rows)} runs -> {outdir / 'summary_table.csv'}")
    return 0


_COMMANDS = {
    "ingest": cmd_ingest,
    "backtest": cmd_backtest,
    "train": cmd_train,
    "eval": cmd_eval,
    "regress": cmd_regress,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code) if exc.code is not None else 0
    try:
        cfg = load_run_config(args.config, seed_override=args.seed, out_override=args.out)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SigblendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
