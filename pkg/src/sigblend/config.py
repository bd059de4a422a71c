"""Flat key=value run configuration.

One small text format drives every command: ``key = value`` lines,
``#`` comments, blank lines ignored. Dotted keys group the rule-based
strategy block (``strategy.*``) and the RL block (``rl.*``). Unknown
keys are rejected so typos fail loudly, and the fully resolved config is
echoed into every output directory for provenance.
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .env import EnvConfig
from .errors import ConfigError, ValidationError
from .signals import CombinerConfig
from .td3 import TD3Config


@dataclass(frozen=True)
class StrategyConfig:
    """Rule-based strategy settings."""

    sentiment_weights: tuple[float, ...] = (0.0, 0.5, 1.0)
    tcost_bps: float = 0.0
    borrow_bps: float = 0.0
    long_only: bool = False
    initial_capital: float = 1.0e6
    quintile_count: int = 5


@dataclass(frozen=True)
class RLConfig:
    """RL training/evaluation settings: windows, frictions, TD3 knobs."""

    train_start: dt.date | None = None
    train_end: dt.date | None = None
    test_start: dt.date | None = None
    test_end: dt.date | None = None
    tcost_bps: float = 10.0
    borrow_bps: float = 0.0
    initial_value: float = 1.0e6
    td3: TD3Config = field(default_factory=TD3Config)

    def env_config(self) -> EnvConfig:
        return EnvConfig(
            tcost_bps=self.tcost_bps,
            borrow_bps=self.borrow_bps,
            initial_value=self.initial_value,
        )


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, resolved from file plus CLI overrides."""

    prices: Path
    sentiment: Path | None = None
    factors: Path | None = None
    out: Path = Path("runs")
    seed: int = 0
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    rl: RLConfig = field(default_factory=RLConfig)


_SCHEMA = {
    "prices": "path",
    "sentiment": "path",
    "factors": "path",
    "out": "path",
    "seed": "int",
    "strategy.sentiment_weights": "floats",
    "strategy.tcost_bps": "float",
    "strategy.borrow_bps": "float",
    "strategy.long_only": "bool",
    "strategy.initial_capital": "float",
    "strategy.quintile_count": "int",
    "rl.train_start": "date",
    "rl.train_end": "date",
    "rl.test_start": "date",
    "rl.test_end": "date",
    "rl.tcost_bps": "float",
    "rl.borrow_bps": "float",
    "rl.initial_value": "float",
    "rl.lr": "float",
    "rl.gamma": "float",
    "rl.policy_noise": "float",
    "rl.noise_clip": "float",
    "rl.policy_delay": "int",
    "rl.exploration_noise": "float",
    "rl.tau": "float",
    "rl.epochs": "int",
    "rl.batch_size": "int",
    "rl.buffer_episodes": "int",
    "rl.hidden": "ints",
    "rl.checkpoint_every": "int",
}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw key -> value strings; duplicate or unknown keys are errors."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{line_no}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{line_no}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{line_no}: duplicate key {key!r}")
        values[key] = value
    return values


def _convert(key: str, value: str, kind: str):
    try:
        if kind == "path":
            return Path(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "bool":
            lowered = value.lower()
            if lowered in ("true", "yes", "1"):
                return True
            if lowered in ("false", "no", "0"):
                return False
            raise ValueError(value)
        if kind == "date":
            return dt.date.fromisoformat(value)
        if kind == "floats":
            return tuple(float(part) for part in value.split(",") if part.strip() != "")
        if kind == "ints":
            return tuple(int(part) for part in value.split(",") if part.strip() != "")
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {value!r} as {kind}") from None
    raise ConfigError(f"config key {key!r}: unsupported kind {kind}")


def load_run_config(
    path: str | Path,
    seed_override: int | None = None,
    out_override: str | Path | None = None,
) -> RunConfig:
    """Parse, type-check, and validate a config file.

    All value validation (gamma ranges, weight bounds, file existence for
    the price input) happens here, before any command does real work.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    raw = parse_config_text(text, str(path))
    typed = {key: _convert(key, value, _SCHEMA[key]) for key, value in raw.items()}

    if "prices" not in typed:
        raise ConfigError(f"{path}: missing required key 'prices'")

    def rel(p: Path | None) -> Path | None:
        # paths in the file resolve relative to the file's directory
        if p is None:
            return None
        return p if p.is_absolute() else (path.parent / p)

    strategy_kwargs = {
        key.split(".", 1)[1]: typed[key] for key in typed if key.startswith("strategy.")
    }
    td3_kwargs = {
        key.split(".", 1)[1]: typed[key]
        for key in typed
        if key.startswith("rl.")
        and key.split(".", 1)[1]
        in (
            "lr",
            "gamma",
            "policy_noise",
            "noise_clip",
            "policy_delay",
            "exploration_noise",
            "tau",
            "epochs",
            "batch_size",
            "buffer_episodes",
            "hidden",
            "checkpoint_every",
        )
    }
    rl_kwargs = {
        key.split(".", 1)[1]: typed[key]
        for key in typed
        if key.startswith("rl.") and key.split(".", 1)[1] not in td3_kwargs
    }

    seed = seed_override if seed_override is not None else typed.get("seed", 0)
    try:
        td3 = TD3Config(seed=seed, **td3_kwargs)
        strategy = StrategyConfig(**strategy_kwargs)
        for w in strategy.sentiment_weights:
            CombinerConfig(sentiment_weight=w, quintile_count=strategy.quintile_count)
        if strategy.tcost_bps < 0 or strategy.borrow_bps < 0:
            raise ValidationError("strategy cost rates must be non-negative")
        if strategy.initial_capital <= 0:
            raise ValidationError("strategy.initial_capital must be positive")
        rl = RLConfig(td3=td3, **rl_kwargs)
        rl.env_config()  # validates frictions and initial value
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    for a, b, name in (
        (rl.train_start, rl.train_end, "train"),
        (rl.test_start, rl.test_end, "test"),
    ):
        if (a is None) != (b is None):
            raise ConfigError(f"{path}: rl.{name}_start and rl.{name}_end must come together")
        if a is not None and a >= b:
            raise ConfigError(f"{path}: rl.{name}_start must precede rl.{name}_end")

    out = Path(out_override) if out_override is not None else rel(typed.get("out", Path("runs")))
    cfg = RunConfig(
        prices=rel(typed["prices"]),
        sentiment=rel(typed.get("sentiment")),
        factors=rel(typed.get("factors")),
        out=out,
        seed=seed,
        strategy=strategy,
        rl=rl,
    )
    if not cfg.prices.exists():
        raise ConfigError(f"prices file not found: {cfg.prices}")
    for label, p in (("sentiment", cfg.sentiment), ("factors", cfg.factors)):
        if p is not None and not p.exists():
            raise ConfigError(f"{label} file not found: {p}")
    return cfg


def render_config(cfg: RunConfig) -> str:
    """Canonical echo of the resolved config (sorted key = value lines)."""
    td3 = cfg.rl.td3
    entries = {
        "prices": cfg.prices,
        "sentiment": cfg.sentiment if cfg.sentiment is not None else "",
        "factors": cfg.factors if cfg.factors is not None else "",
        "out": cfg.out,
        "seed": cfg.seed,
        "strategy.sentiment_weights": ",".join(repr(w) for w in cfg.strategy.sentiment_weights),
        "strategy.tcost_bps": repr(cfg.strategy.tcost_bps),
        "strategy.borrow_bps": repr(cfg.strategy.borrow_bps),
        "strategy.long_only": str(cfg.strategy.long_only).lower(),
        "strategy.initial_capital": repr(cfg.strategy.initial_capital),
        "strategy.quintile_count": cfg.strategy.quintile_count,
        "rl.train_start": cfg.rl.train_start or "",
        "rl.train_end": cfg.rl.train_end or "",
        "rl.test_start": cfg.rl.test_start or "",
        "rl.test_end": cfg.rl.test_end or "",
        "rl.tcost_bps": repr(cfg.rl.tcost_bps),
        "rl.borrow_bps": repr(cfg.rl.borrow_bps),
        "rl.initial_value": repr(cfg.rl.initial_value),
        "rl.lr": repr(td3.lr),
        "rl.gamma": repr(td3.gamma),
        "rl.policy_noise": repr(td3.policy_noise),
        "rl.noise_clip": repr(td3.noise_clip),
        "rl.policy_delay": td3.policy_delay,
        "rl.exploration_noise": repr(td3.exploration_noise),
        "rl.tau": repr(td3.tau),
        "rl.epochs": td3.epochs,
        "rl.batch_size": td3.batch_size,
        "rl.buffer_episodes": td3.buffer_episodes,
        "rl.hidden": ",".join(str(h) for h in td3.hidden),
        "rl.checkpoint_every": td3.checkpoint_every,
    }
    lines = [f"{key} = {entries[key]}" for key in sorted(entries)]
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()
