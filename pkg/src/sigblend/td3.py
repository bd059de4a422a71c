"""Twin-delayed deterministic policy gradient over the portfolio env.

The agent keeps six networks: an actor mapping states to allocation
logits, two critics scoring (state, action) pairs, and a Polyak-averaged
target copy of each. Bootstrapped critic targets use the clipped-noise
smoothed target policy and the minimum of the two target critics; the
actor and the target networks update only every ``policy_delay`` critic
steps. One training epoch is one exploration episode through the window
followed by one critic update per environment step.

Everything is driven by a single master seed: network init, exploration
noise, target smoothing noise, and replay sampling each get their own
child generator, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .backtest import CASH_LABEL, BacktestReport
from .env import FeatureScaler, PortfolioEnv
from .errors import (
    CheckpointError,
    SchedulingError,
    TrainingDivergenceError,
    ValidationError,
)
from .market_data import PanelStore
from .neural import (
    DenseNet,
    adam_from_tensors,
    adam_init,
    adam_step,
    adam_tensors,
    backward,
    clone_net,
    forward,
    forward_tape,
    init_dense,
    net_from_tensors,
    net_tensors,
    polyak_update,
    read_checkpoint,
    write_checkpoint,
)

TRAINING_LOG_HEADER = ("epoch", "episode_return", "critic1_loss", "critic2_loss", "eval_nav")


@dataclass(frozen=True)
class TD3Config:
    """Training hyperparameters.

    ``batch_size=0`` means "one episode's worth" (window length minus
    one), and the replay capacity is ``buffer_episodes`` times that.
    """

    lr: float = 1.0e-4
    gamma: float = 0.99
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    exploration_noise: float = 0.1
    tau: float = 0.005
    epochs: int = 512
    batch_size: int = 0
    buffer_episodes: int = 25
    hidden: tuple[int, ...] = (256, 256)
    checkpoint_every: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValidationError(f"lr must be positive, got {self.lr}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.policy_noise < 0 or self.noise_clip < 0 or self.exploration_noise < 0:
            raise ValidationError("noise scales must be non-negative")
        if self.policy_delay < 1:
            raise ValidationError(f"policy_delay must be >= 1, got {self.policy_delay}")
        if not 0.0 < self.tau <= 1.0:
            raise ValidationError(f"tau must be in (0, 1], got {self.tau}")
        if self.epochs < 1 or self.buffer_episodes < 1 or self.checkpoint_every < 1:
            raise ValidationError("epochs, buffer_episodes, checkpoint_every must be >= 1")
        if self.batch_size < 0:
            raise ValidationError(f"batch_size must be >= 0, got {self.batch_size}")
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValidationError(f"hidden sizes must be positive, got {self.hidden}")


class ReplayBuffer:
    """Fixed-capacity ring buffer with seeded uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, seed):
        if capacity < 1:
            raise ValidationError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))
        self._dones = np.zeros(capacity)
        self._size = 0
        self._cursor = 0
        self._rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        return self._size

    def push(self, state, action, reward, next_state, done) -> None:
        i = self._cursor
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._dones[i] = 1.0 if done else 0.0
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int) -> dict[str, np.ndarray]:
        if batch_size < 1 or batch_size > self._size:
            raise ValidationError(f"cannot sample {batch_size} of {self._size} transitions")
        idx = self._rng.integers(0, self._size, batch_size)
        return {
            "state": self._states[idx],
            "action": self._actions[idx],
            "reward": self._rewards[idx],
            "next_state": self._next_states[idx],
            "done": self._dones[idx],
        }


class TD3Agent:
    """Actor, twin critics, and their target copies plus optimizers."""

    def __init__(self, state_dim: int, action_dim: int, cfg: TD3Config, init_rng):
        self.state_dim = state_dim
        self.action_dim = action_dim
        actor_sizes = (state_dim, *cfg.hidden, action_dim)
        critic_sizes = (state_dim + action_dim, *cfg.hidden, 1)
        self.actor = init_dense(actor_sizes, "identity", init_rng)
        self.critic1 = init_dense(critic_sizes, "identity", init_rng)
        self.critic2 = init_dense(critic_sizes, "identity", init_rng)
        self.actor_target = clone_net(self.actor)
        self.critic1_target = clone_net(self.critic1)
        self.critic2_target = clone_net(self.critic2)
        self.actor_adam = adam_init(self.actor, cfg.lr)
        self.critic1_adam = adam_init(self.critic1, cfg.lr)
        self.critic2_adam = adam_init(self.critic2, cfg.lr)
        self.critic_updates = 0

    def act(self, state) -> np.ndarray:
        """Greedy allocation logits for one state."""
        return forward(self.actor, np.asarray(state, dtype=float))

    def update_targets(self, tau: float) -> None:
        polyak_update(self.actor_target, self.actor, tau)
        polyak_update(self.critic1_target, self.critic1, tau)
        polyak_update(self.critic2_target, self.critic2, tau)


def compute_target(batch: dict, agent: TD3Agent, cfg: TD3Config, rng) -> np.ndarray:
    """Bootstrapped critic target with clipped-noise policy smoothing.

    y = r + gamma * (1 - done) * min_j Q'_j(s', pi'(s') + eps), with
    eps ~ N(0, policy_noise^2) clipped to +-noise_clip per coordinate.
    """
    next_states = batch["next_state"]
    next_actions = forward(agent.actor_target, next_states)
    if cfg.policy_noise > 0.0:
        eps = rng.normal(0.0, cfg.policy_noise, next_actions.shape)
        next_actions = next_actions + np.clip(eps, -cfg.noise_clip, cfg.noise_clip)
    pairs = np.hstack([next_states, next_actions])
    q1 = forward(agent.critic1_target, pairs).ravel()
    q2 = forward(agent.critic2_target, pairs).ravel()
    q_min = np.minimum(q1, q2)
    # the pessimistic bound can never exceed either critic's estimate
    assert (q_min <= q1).all() and (q_min <= q2).all()
    return batch["reward"] + cfg.gamma * (1.0 - batch["done"]) * q_min


def critic_update(batch: dict, agent: TD3Agent, targets: np.ndarray, cfg: TD3Config):
    """One squared-error regression step of both critics onto ``targets``."""
    pairs = np.hstack([batch["state"], batch["action"]])
    n = len(targets)
    losses = []
    for critic, adam in (
        (agent.critic1, agent.critic1_adam),
        (agent.critic2, agent.critic2_adam),
    ):
        q, tape = forward_tape(critic, pairs)
        err = q.ravel() - targets
        loss = float(err @ err) / n
        if not np.isfinite(loss):
            raise TrainingDivergenceError(f"critic loss diverged: {loss}")
        grads = backward(critic, tape, (2.0 / n) * err[:, None])
        adam_step(critic, grads, adam)
        losses.append(loss)
    agent.critic_updates += 1
    return losses[0], losses[1]


def actor_update(batch: dict, agent: TD3Agent, cfg: TD3Config) -> float:
    """Deterministic policy gradient step through critic 1.

    Maximizes mean Q1(s, pi(s)); the gradient reaches the actor through
    the critic's input gradient, and critic parameters are not touched.
    May only be called when ``critic_updates`` is a nonzero multiple of
    ``policy_delay``.
    """
    if agent.critic_updates == 0 or agent.critic_updates % cfg.policy_delay != 0:
        raise SchedulingError(
            f"actor update at critic step {agent.critic_updates}; "
            f"allowed only every {cfg.policy_delay} steps"
        )
    states = batch["state"]
    n = len(states)
    logits, actor_tape = forward_tape(agent.actor, states)
    pairs = np.hstack([states, logits])
    q, critic_tape = forward_tape(agent.critic1, pairs)
    loss = -float(q.sum()) / n
    if not np.isfinite(loss):
        raise TrainingDivergenceError(f"actor loss diverged: {loss}")
    upstream = np.full((n, 1), -1.0 / n)
    critic_grads = backward(agent.critic1, critic_tape, upstream)
    action_grad = critic_grads.inputs[:, agent.state_dim :]
    actor_grads = backward(agent.actor, actor_tape, action_grad)
    adam_step(agent.actor, actor_grads, agent.actor_adam)
    return loss


# -- rollouts & evaluation ----------------------------------------------------


def rollout(agent: TD3Agent, env: PortfolioEnv, noise_sigma: float = 0.0, rng=None, buffer=None):
    """One full episode; returns the per-step (info, reward) records.

    With ``noise_sigma`` set, Gaussian exploration noise is added to the
    actor's logits and every transition is pushed into ``buffer``.
    """
    state = env.reset()
    records = []
    while True:
        logits = agent.act(state)
        if noise_sigma > 0.0:
            logits = logits + rng.normal(0.0, noise_sigma, len(logits))
        result = env.step(logits)
        if buffer is not None:
            buffer.push(state, logits, result.reward, result.state, result.done)
        records.append((result.info, result.reward))
        state = result.state
        if result.done:
            return records


def episode_nav(records, initial_value: float) -> float:
    """Final net value of an episode: compounded rewards on initial value."""
    nav = initial_value
    for _, reward in records:
        nav *= 1.0 + reward
    return nav


def report_from_records(records, env: PortfolioEnv) -> BacktestReport:
    """Net-of-cost daily ledger of one greedy episode."""
    trade_dates = tuple(info["date"] for info, _ in records)
    dates = tuple(info["next_date"] for info, _ in records)
    rewards = np.array([reward for _, reward in records])
    weights = np.array([info["weights"] for info, _ in records])
    turnover = np.array([info["turnover"] for info, _ in records])
    costs = np.array([info["cost"] for info, _ in records])
    nav = env.config.initial_value * np.cumprod(1.0 + rewards)
    return BacktestReport(
        kind="rl",
        tickers=env.panel.tickers,
        weight_labels=env.weight_labels,
        trade_dates=trade_dates,
        dates=dates,
        weights=weights,
        daily_return=rewards,
        nav=nav,
        turnover=turnover,
        costs_paid=costs,
        initial_value=env.config.initial_value,
    )


def evaluate(agent: TD3Agent, env: PortfolioEnv) -> BacktestReport:
    """Greedy (noise-free) policy rollout as a standard backtest report."""
    return report_from_records(rollout(agent, env), env)


def write_trajectory(records, weight_labels, path: str | Path) -> None:
    """Per-step environment ledger: value index, reward, frictions, weights."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["date", "V", "reward", "turnover", "cost"]
            + [f"weight_{label}" for label in weight_labels[:-1]]
            + ["weight_cash"]
        )
        for info, reward in records:
            writer.writerow(
                [
                    info["date"].isoformat(),
                    repr(float(info["value"])),
                    repr(float(reward)),
                    repr(float(info["turnover"])),
                    repr(float(info["cost"])),
                ]
                + [repr(float(w)) for w in info["weights"]]
            )


def buy_and_hold_report(
    panel: PanelStore, start: dt.date, end: dt.date, initial_value: float = 1.0e6
) -> BacktestReport:
    """Equal-weight portfolio formed at ``start`` and never rebalanced.

    The benchmark trades once at formation and is left to drift, so its
    turnover and cost ledgers are identically zero.
    """
    if start not in panel.date_index or end not in panel.date_index:
        raise ValidationError(f"benchmark window [{start}, {end}] not in panel calendar")
    i0, i1 = panel.date_index[start], panel.date_index[end]
    if i0 >= i1:
        raise ValidationError(f"benchmark window start {start} must precede end {end}")
    closes = panel.close[i0 : i1 + 1]
    rel = closes / closes[0]
    value = initial_value * rel.mean(axis=1)
    daily_return = value[1:] / value[:-1] - 1.0
    holdings = rel / rel.sum(axis=1, keepdims=True)  # drifted weights, cash stays 0
    n = len(daily_return)
    zeros = np.zeros(n)
    weights = np.hstack([holdings[:-1], np.zeros((n, 1))])
    return BacktestReport(
        kind="benchmark",
        tickers=panel.tickers,
        weight_labels=panel.tickers + (CASH_LABEL,),
        trade_dates=panel.dates[i0:i1],
        dates=panel.dates[i0 + 1 : i1 + 1],
        weights=weights,
        daily_return=daily_return,
        nav=value[1:],
        turnover=zeros,
        costs_paid=zeros.copy(),
        initial_value=initial_value,
    )


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    agent: TD3Agent
    log: list[dict]
    checkpoints: list[Path] = field(default_factory=list)
    final_checkpoint: Path | None = None
    best_checkpoint: Path | None = None


def _rng_state(rng) -> dict:
    return rng.bit_generator.state


def _restore_rng(state: dict):
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


def save_agent_checkpoint(
    path: str | Path,
    agent: TD3Agent,
    cfg: TD3Config,
    scaler: FeatureScaler,
    epoch: int,
    rng_states: dict,
    provenance: dict,
) -> None:
    """Full training state: networks, optimizers, scaler, RNG streams."""
    tensors: dict[str, np.ndarray] = {}
    for prefix, net in (
        ("actor", agent.actor),
        ("critic1", agent.critic1),
        ("critic2", agent.critic2),
        ("actor_t", agent.actor_target),
        ("critic1_t", agent.critic1_target),
        ("critic2_t", agent.critic2_target),
    ):
        tensors.update(net_tensors(prefix, net))
    for prefix, adam in (
        ("actor_adam", agent.actor_adam),
        ("critic1_adam", agent.critic1_adam),
        ("critic2_adam", agent.critic2_adam),
    ):
        tensors.update(adam_tensors(prefix, adam))
    tensors["scaler.mean"] = scaler.mean
    tensors["scaler.std"] = scaler.std
    meta = {
        "kind": "td3-agent",
        "epoch": epoch,
        "critic_updates": agent.critic_updates,
        "state_dim": agent.state_dim,
        "action_dim": agent.action_dim,
        "hidden": list(cfg.hidden),
        "adam_steps": {
            "actor": agent.actor_adam.step,
            "critic1": agent.critic1_adam.step,
            "critic2": agent.critic2_adam.step,
        },
        "lr": cfg.lr,
        "rng": rng_states,
        "provenance": provenance,
    }
    write_checkpoint(path, tensors, meta)


def load_agent_checkpoint(path: str | Path, cfg: TD3Config | None = None):
    """Rebuild (agent, scaler, meta) from a checkpoint file."""
    tensors, meta = read_checkpoint(path)
    if meta.get("kind") != "td3-agent":
        raise CheckpointError(f"{path}: not a TD3 agent checkpoint")
    if cfg is None:
        cfg = TD3Config(hidden=tuple(meta["hidden"]), lr=meta["lr"])
    elif tuple(meta["hidden"]) != tuple(cfg.hidden):
        raise CheckpointError(
            f"{path}: checkpoint hidden sizes {meta['hidden']} differ from config {list(cfg.hidden)}"
        )
    agent = TD3Agent.__new__(TD3Agent)
    agent.state_dim = int(meta["state_dim"])
    agent.action_dim = int(meta["action_dim"])
    agent.actor = net_from_tensors("actor", tensors, "identity")
    agent.critic1 = net_from_tensors("critic1", tensors, "identity")
    agent.critic2 = net_from_tensors("critic2", tensors, "identity")
    agent.actor_target = net_from_tensors("actor_t", tensors, "identity")
    agent.critic1_target = net_from_tensors("critic1_t", tensors, "identity")
    agent.critic2_target = net_from_tensors("critic2_t", tensors, "identity")
    steps = meta["adam_steps"]
    agent.actor_adam = adam_from_tensors("actor_adam", tensors, cfg.lr, int(steps["actor"]))
    agent.critic1_adam = adam_from_tensors("critic1_adam", tensors, cfg.lr, int(steps["critic1"]))
    agent.critic2_adam = adam_from_tensors("critic2_adam", tensors, cfg.lr, int(steps["critic2"]))
    agent.critic_updates = int(meta["critic_updates"])
    scaler = FeatureScaler(mean=tensors["scaler.mean"], std=tensors["scaler.std"])
    return agent, scaler, meta


def write_training_log(log: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAINING_LOG_HEADER)
        for row in log:
            writer.writerow(
                [
                    row["epoch"],
                    repr(float(row["episode_return"])),
                    repr(float(row["critic1_loss"])),
                    repr(float(row["critic2_loss"])),
                    repr(float(row["eval_nav"])),
                ]
            )


def train(
    env: PortfolioEnv,
    cfg: TD3Config,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    provenance: dict | None = None,
) -> TrainResult:
    """Run the full training loop over ``env``'s window.

    Per epoch: one exploration episode pushed into the replay buffer,
    then one critic update per environment step; every ``policy_delay``
    critic updates the actor steps and all three targets Polyak-average.
    Logs per-epoch episode return, critic losses, and the NAV of a greedy
    evaluation pass. With ``out_dir`` set, periodic/best/final
    checkpoints, the training log, and a manifest are written there. If a
    loss or gradient diverges, the last completed epoch's state is saved
    as ``checkpoint_abort.bin`` and the error re-raised.
    """
    steps_per_episode = env.n_steps
    batch_size = cfg.batch_size if cfg.batch_size > 0 else steps_per_episode
    capacity = cfg.buffer_episodes * steps_per_episode
    provenance = dict(provenance or {})
    provenance.setdefault("seed", cfg.seed)

    if resume is not None:
        agent, ckpt_scaler, meta = load_agent_checkpoint(resume, cfg)
        if agent.state_dim != env.state_dim or agent.action_dim != env.action_dim:
            raise CheckpointError(
                f"checkpoint dims ({agent.state_dim}, {agent.action_dim}) do not match "
                f"environment ({env.state_dim}, {env.action_dim})"
            )
        start_epoch = int(meta["epoch"])
        explore_rng = _restore_rng(meta["rng"]["explore"])
        target_rng = _restore_rng(meta["rng"]["target"])
        buffer = ReplayBuffer(capacity, env.state_dim, env.action_dim, 0)
        buffer._rng.bit_generator.state = meta["rng"]["replay"]
    else:
        seeds = np.random.SeedSequence(cfg.seed).spawn(4)
        init_rng = np.random.default_rng(seeds[0])
        explore_rng = np.random.default_rng(seeds[1])
        target_rng = np.random.default_rng(seeds[2])
        agent = TD3Agent(env.state_dim, env.action_dim, cfg, init_rng)
        buffer = ReplayBuffer(capacity, env.state_dim, env.action_dim, seeds[3])
        start_epoch = 0

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    def rng_states() -> dict:
        return {
            "explore": _rng_state(explore_rng),
            "target": _rng_state(target_rng),
            "replay": _rng_state(buffer._rng),
        }

    def checkpoint(name: str, epoch: int) -> Path | None:
        if out_path is None:
            return None
        path = out_path / name
        save_agent_checkpoint(path, agent, cfg, env.scaler, epoch, rng_states(), provenance)
        return path

    result = TrainResult(agent=agent, log=[])
    best_return = -np.inf
    last_good = checkpoint("checkpoint_start.bin", start_epoch)

    for epoch in range(start_epoch + 1, start_epoch + cfg.epochs + 1):
        try:
            records = rollout(agent, env, cfg.exploration_noise, explore_rng, buffer)
            episode_return = float(sum(r for _, r in records))
            c1_losses, c2_losses = [], []
            if len(buffer) >= batch_size:
                for _ in range(steps_per_episode):
                    batch = buffer.sample(batch_size)
                    targets = compute_target(batch, agent, cfg, target_rng)
                    l1, l2 = critic_update(batch, agent, targets, cfg)
                    c1_losses.append(l1)
                    c2_losses.append(l2)
                    if agent.critic_updates % cfg.policy_delay == 0:
                        actor_update(batch, agent, cfg)
                        agent.update_targets(cfg.tau)
            eval_nav = episode_nav(rollout(agent, env), env.config.initial_value)
        except TrainingDivergenceError:
            if out_path is not None and last_good is not None:
                abort = out_path / "checkpoint_abort.bin"
                abort.write_bytes(Path(last_good).read_bytes())
            raise
        result.log.append(
            {
                "epoch": epoch,
                "episode_return": episode_return,
                "critic1_loss": float(np.mean(c1_losses)) if c1_losses else 0.0,
                "critic2_loss": float(np.mean(c2_losses)) if c2_losses else 0.0,
                "eval_nav": eval_nav,
            }
        )
        if episode_return > best_return:
            best_return = episode_return
            path = checkpoint("checkpoint_best.bin", epoch)
            result.best_checkpoint = path
        if epoch % cfg.checkpoint_every == 0:
            path = checkpoint(f"checkpoint_epoch_{epoch:05d}.bin", epoch)
            if path is not None:
                result.checkpoints.append(path)
                last_good = path

    result.final_checkpoint = checkpoint("checkpoint_final.bin", start_epoch + cfg.epochs)
    if out_path is not None:
        write_training_log(result.log, out_path / "training_log.csv")
        manifest = {
            "epochs_completed": start_epoch + cfg.epochs,
            "critic_updates": agent.critic_updates,
            "provenance": provenance,
        }
        with open(out_path / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return result
