"""TD3 agent, target computation, scheduling, and training-loop tests."""

import numpy as np
import pytest

from sigblend import td3
from sigblend.env import EnvConfig, FeatureScaler, PortfolioEnv
from sigblend.errors import (
    CheckpointError,
    SchedulingError,
    TrainingDivergenceError,
    ValidationError,
)
from sigblend.neural import forward
from sigblend.td3 import (
    ReplayBuffer,
    TD3Agent,
    TD3Config,
    actor_update,
    buy_and_hold_report,
    compute_target,
    critic_update,
    episode_nav,
    evaluate,
    load_agent_checkpoint,
    report_from_records,
    rollout,
    save_agent_checkpoint,
    train,
    write_trajectory,
)

SMALL = TD3Config(hidden=(8, 8), epochs=3, checkpoint_every=2, seed=1)


@pytest.fixture(scope="module")
def scaler(panel, features):
    return FeatureScaler.fit(panel, features, features.dates[0], features.dates[-1])


@pytest.fixture
def env(panel, features, scaler):
    return PortfolioEnv(
        panel, features, scaler, features.dates[0], features.dates[10], EnvConfig()
    )


def flat_critic(net, value):
    """Zero every parameter so the net returns ``value`` for any input."""
    for w in net.weights:
        w[:] = 0.0
    for b in net.biases:
        b[:] = 0.0
    net.biases[-1][:] = value
    net.bump()


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            {"lr": 0.0},
            {"gamma": 0.0},
            {"gamma": 1.5},
            {"policy_noise": -0.1},
            {"policy_delay": 0},
            {"tau": 0.0},
            {"tau": 1.5},
            {"epochs": 0},
            {"batch_size": -1},
            {"hidden": ()},
            {"hidden": (0,)},
        ],
    )
    def test_rejects_bad_values(self, kw):
        with pytest.raises(ValidationError):
            TD3Config(**kw)

    def test_defaults_are_valid(self):
        TD3Config()


class TestReplayBuffer:
    def test_push_and_sample_shapes(self):
        buf = ReplayBuffer(10, 4, 2, seed=0)
        for i in range(6):
            buf.push(np.full(4, i), np.zeros(2), float(i), np.zeros(4), i == 5)
        assert len(buf) == 6
        batch = buf.sample(3)
        assert batch["state"].shape == (3, 4)
        assert batch["action"].shape == (3, 2)
        assert batch["reward"].shape == (3,)

    def test_ring_overwrites_oldest(self):
        buf = ReplayBuffer(3, 1, 1, seed=0)
        for i in range(5):
            buf.push([float(i)], [0.0], 0.0, [0.0], False)
        assert len(buf) == 3
        stored = sorted(buf._states.ravel().tolist())
        assert stored == [2.0, 3.0, 4.0]

    def test_sampling_is_seeded(self):
        def draw(seed):
            buf = ReplayBuffer(8, 1, 1, seed=seed)
            for i in range(8):
                buf.push([float(i)], [0.0], 0.0, [0.0], False)
            return buf.sample(4)["state"].ravel()

        np.testing.assert_array_equal(draw(3), draw(3))
        assert not np.array_equal(draw(3), draw(4))

    def test_oversampling_rejected(self):
        buf = ReplayBuffer(4, 1, 1, seed=0)
        buf.push([0.0], [0.0], 0.0, [0.0], False)
        with pytest.raises(ValidationError):
            buf.sample(2)


class TestComputeTarget:
    def rigged_agent(self):
        cfg = TD3Config(hidden=(2,))
        agent = TD3Agent(3, 2, cfg, np.random.default_rng(0))
        flat_critic(agent.critic1_target, 0.8)
        flat_critic(agent.critic2_target, 0.5)
        return agent, cfg

    def test_hand_value_min_of_twins_discounted(self):
        # y = r + gamma * (1 - done) * min(0.8, 0.5)
        agent, cfg = self.rigged_agent()
        batch = {
            "next_state": np.zeros((2, 3)),
            "reward": np.array([0.3, 0.3]),
            "done": np.array([0.0, 1.0]),
        }
        y = compute_target(batch, agent, cfg, np.random.default_rng(1))
        np.testing.assert_allclose(y, [0.7949999999999999, 0.3], atol=1e-15)

    def test_zero_noise_matches_manual_bootstrap(self, rng):
        cfg = TD3Config(hidden=(4,), policy_noise=0.0)
        agent = TD3Agent(5, 3, cfg, rng)
        batch = {
            "next_state": rng.normal(size=(6, 5)),
            "reward": rng.normal(size=6),
            "done": np.zeros(6),
        }
        y = compute_target(batch, agent, cfg, np.random.default_rng(0))
        a = forward(agent.actor_target, batch["next_state"])
        pairs = np.hstack([batch["next_state"], a])
        q1 = forward(agent.critic1_target, pairs).ravel()
        q2 = forward(agent.critic2_target, pairs).ravel()
        np.testing.assert_array_equal(y, batch["reward"] + cfg.gamma * np.minimum(q1, q2))

    def test_zero_clip_equals_zero_noise(self, rng):
        cfg_noisy = TD3Config(hidden=(4,), policy_noise=0.2, noise_clip=0.0)
        cfg_quiet = TD3Config(hidden=(4,), policy_noise=0.0)
        agent = TD3Agent(5, 3, cfg_noisy, rng)
        batch = {
            "next_state": rng.normal(size=(4, 5)),
            "reward": np.zeros(4),
            "done": np.zeros(4),
        }
        clipped = compute_target(batch, agent, cfg_noisy, np.random.default_rng(7))
        quiet = compute_target(batch, agent, cfg_quiet, np.random.default_rng(8))
        np.testing.assert_array_equal(clipped, quiet)

    def test_smoothing_noise_is_clipped(self, rng):
        # with a one-sided critic (identity on action sum) the clip bounds y
        cfg = TD3Config(hidden=(2,), policy_noise=5.0, noise_clip=0.25)
        agent = TD3Agent(2, 1, cfg, rng)
        for target_net in (agent.critic1_target, agent.critic2_target):
            flat_critic(target_net, 0.0)
            # read the action coordinate (last input) straight through
            target_net.weights[0][-1, 0] = 1.0
            target_net.weights[1][0, 0] = 1.0
        flat_critic(agent.actor_target, 0.0)
        batch = {"next_state": np.zeros((64, 2)), "reward": np.zeros(64), "done": np.zeros(64)}
        y = compute_target(batch, agent, cfg, np.random.default_rng(3))
        assert (np.abs(y) <= cfg.gamma * cfg.noise_clip + 1e-12).all()
        assert np.abs(y).max() > 0.0  # noise actually flowed through


def make_batch(rng, n, state_dim, action_dim):
    return {
        "state": rng.normal(size=(n, state_dim)),
        "action": rng.normal(size=(n, action_dim)),
        "reward": rng.normal(size=n),
        "next_state": rng.normal(size=(n, state_dim)),
        "done": np.zeros(n),
    }


class TestUpdateMechanics:
    def test_critic_update_reduces_loss_on_fixed_batch(self, rng):
        cfg = TD3Config(hidden=(16,), lr=1e-2)
        agent = TD3Agent(4, 2, cfg, rng)
        batch = make_batch(np.random.default_rng(2), 32, 4, 2)
        targets = np.random.default_rng(3).normal(size=32)
        first = critic_update(batch, agent, targets, cfg)
        for _ in range(50):
            last = critic_update(batch, agent, targets, cfg)
        assert last[0] < first[0]
        assert last[1] < first[1]

    def test_actor_update_respects_delay_schedule(self, rng):
        cfg = TD3Config(hidden=(8,), policy_delay=2)
        agent = TD3Agent(4, 2, cfg, rng)
        batch = make_batch(np.random.default_rng(4), 16, 4, 2)
        with pytest.raises(SchedulingError):
            actor_update(batch, agent, cfg)  # zero critic updates so far
        allowed = 0
        for step in range(1, 11):
            critic_update(batch, agent, np.zeros(16), cfg)
            if step % 2 == 0:
                actor_update(batch, agent, cfg)
                allowed += 1
            else:
                with pytest.raises(SchedulingError):
                    actor_update(batch, agent, cfg)
        assert allowed == 5

    def test_actor_update_leaves_critics_untouched(self, rng):
        cfg = TD3Config(hidden=(8,), policy_delay=1)
        agent = TD3Agent(4, 2, cfg, rng)
        batch = make_batch(np.random.default_rng(5), 16, 4, 2)
        critic_update(batch, agent, np.zeros(16), cfg)
        c1 = [w.copy() for w in agent.critic1.weights]
        c2 = [w.copy() for w in agent.critic2.weights]
        actor_before = [w.copy() for w in agent.actor.weights]
        actor_update(batch, agent, cfg)
        for before, after in zip(c1, agent.critic1.weights):
            np.testing.assert_array_equal(before, after)
        for before, after in zip(c2, agent.critic2.weights):
            np.testing.assert_array_equal(before, after)
        assert any(
            not np.array_equal(b, a) for b, a in zip(actor_before, agent.actor.weights)
        )

    def test_actor_update_increases_critic_score(self, rng):
        # the policy-gradient step must climb Q1 for the batch states
        cfg = TD3Config(hidden=(16,), lr=1e-2, policy_delay=1)
        agent = TD3Agent(4, 2, cfg, rng)
        batch = make_batch(np.random.default_rng(6), 32, 4, 2)

        def q_score():
            logits = forward(agent.actor, batch["state"])
            return float(forward(agent.critic1, np.hstack([batch["state"], logits])).mean())

        critic_update(batch, agent, np.zeros(32), cfg)
        before = q_score()
        for _ in range(40):
            agent.critic_updates = cfg.policy_delay  # keep the schedule satisfied
            actor_update(batch, agent, cfg)
        assert q_score() > before

    def test_update_targets_moves_toward_online(self, rng):
        cfg = TD3Config(hidden=(4,))
        agent = TD3Agent(3, 2, cfg, rng)
        batch = make_batch(np.random.default_rng(7), 8, 3, 2)
        critic_update(batch, agent, np.ones(8), cfg)
        gap_before = np.abs(agent.critic1.weights[0] - agent.critic1_target.weights[0]).sum()
        agent.update_targets(0.5)
        gap_after = np.abs(agent.critic1.weights[0] - agent.critic1_target.weights[0]).sum()
        assert gap_after < gap_before


class TestRolloutAndReports:
    def test_rollout_covers_window(self, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        records = rollout(agent, env)
        assert len(records) == env.n_steps
        assert records[0][0]["date"] == env.dates[0]
        assert records[-1][0]["next_date"] == env.dates[-1]

    def test_noisy_rollout_fills_buffer(self, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        buf = ReplayBuffer(100, env.state_dim, env.action_dim, seed=0)
        rollout(agent, env, noise_sigma=0.1, rng=np.random.default_rng(0), buffer=buf)
        assert len(buf) == env.n_steps

    def test_episode_nav_compounds_rewards(self, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        records = rollout(agent, env)
        nav = episode_nav(records, 1.0)
        want = float(np.prod([1.0 + r for _, r in records]))
        assert nav == pytest.approx(want, rel=1e-12)

    def test_report_net_nav_composition(self, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        records = rollout(agent, env)
        rep = report_from_records(records, env)
        rewards = np.array([r for _, r in records])
        np.testing.assert_allclose(
            rep.nav, env.config.initial_value * np.cumprod(1.0 + rewards), rtol=1e-12
        )
        assert rep.kind == "rl"
        # the report nav is net of costs, the env value index is gross
        gross_value = records[-1][0]["value"]
        assert rep.nav[-1] <= gross_value + 1e-9

    def test_evaluate_equals_manual_rollout(self, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        rep = evaluate(agent, env)
        again = report_from_records(rollout(agent, env), env)
        np.testing.assert_array_equal(rep.nav, again.nav)

    def test_trajectory_file_layout(self, tmp_path, env, rng):
        agent = TD3Agent(env.state_dim, env.action_dim, SMALL, rng)
        records = rollout(agent, env)
        path = tmp_path / "traj.csv"
        write_trajectory(records, env.weight_labels, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("date,V,reward,turnover,cost,weight_")
        assert lines[0].endswith("weight_cash")
        assert len(lines) == 1 + env.n_steps


class TestBuyAndHold:
    def test_offsetting_moves_are_flat(self):
        import datetime as dt

        from sigblend.market_data import Bar, panel_from_bars

        days = (dt.date(2022, 5, 2), dt.date(2022, 5, 3))
        bars = []
        for t, closes in (("AAA", (100.0, 110.0)), ("BBB", (100.0, 90.0))):
            for day, c in zip(days, closes):
                bars.append(Bar(day, t, c, c, c, c, 1.0, c))
        rep = buy_and_hold_report(panel_from_bars(bars), days[0], days[1], 1.0e6)
        assert rep.daily_return[0] == pytest.approx(0.0, abs=1e-15)
        assert rep.nav[0] == pytest.approx(1.0e6, abs=1e-6)

    def test_never_trades_after_formation(self, panel):
        rep = buy_and_hold_report(panel, panel.dates[40], panel.dates[60])
        np.testing.assert_array_equal(rep.turnover, 0.0)
        np.testing.assert_array_equal(rep.costs_paid, 0.0)
        assert rep.kind == "benchmark"

    def test_nav_is_mean_of_relatives(self, panel):
        i0, i1 = 40, 60
        rep = buy_and_hold_report(panel, panel.dates[i0], panel.dates[i1], 2.0)
        rel = panel.close[i0:i1 + 1] / panel.close[i0]
        np.testing.assert_allclose(rep.nav, 2.0 * rel.mean(axis=1)[1:], rtol=1e-12)

    def test_bad_window_rejected(self, panel):
        with pytest.raises(ValidationError):
            buy_and_hold_report(panel, panel.dates[10], panel.dates[10])


class TestTrainingLoop:
    def test_short_run_is_deterministic(self, panel, features, scaler):
        def run():
            env = PortfolioEnv(panel, features, scaler, features.dates[0], features.dates[10])
            return train(env, SMALL)

        a, b = run(), run()
        assert a.log == b.log
        for w1, w2 in zip(a.agent.actor.weights, b.agent.actor.weights):
            np.testing.assert_array_equal(w1, w2)

    def test_update_counts_follow_schedule(self, env):
        result = train(env, SMALL)
        # batch_size defaults to one episode, so updates start in epoch 1
        assert result.agent.critic_updates == SMALL.epochs * env.n_steps
        assert result.agent.actor_adam.step == result.agent.critic_updates // SMALL.policy_delay

    def test_log_columns_and_length(self, env):
        result = train(env, SMALL)
        assert len(result.log) == SMALL.epochs
        assert [row["epoch"] for row in result.log] == [1, 2, 3]
        assert all(np.isfinite(row["eval_nav"]) for row in result.log)

    def test_checkpoint_files_and_manifest(self, tmp_path, env):
        cfg = TD3Config(hidden=(8, 8), epochs=5, checkpoint_every=2, seed=1)
        result = train(env, cfg, out_dir=tmp_path)
        names = {p.name for p in tmp_path.iterdir()}
        assert {
            "checkpoint_start.bin",
            "checkpoint_best.bin",
            "checkpoint_final.bin",
            "checkpoint_epoch_00002.bin",
            "checkpoint_epoch_00004.bin",
            "training_log.csv",
            "manifest.json",
        } <= names
        assert [p.name for p in result.checkpoints] == [
            "checkpoint_epoch_00002.bin",
            "checkpoint_epoch_00004.bin",
        ]
        log_lines = (tmp_path / "training_log.csv").read_text().splitlines()
        assert log_lines[0] == "epoch,episode_return,critic1_loss,critic2_loss,eval_nav"
        assert len(log_lines) == 1 + cfg.epochs

    def test_agent_checkpoint_round_trip(self, tmp_path, env, rng):
        result = train(env, SMALL)
        path = tmp_path / "agent.bin"
        save_agent_checkpoint(
            path, result.agent, SMALL, env.scaler, epoch=3, rng_states={}, provenance={"p": 1}
        )
        agent, scaler_back, meta = load_agent_checkpoint(path)
        assert meta["epoch"] == 3
        assert meta["provenance"] == {"p": 1}
        assert agent.critic_updates == result.agent.critic_updates
        x = rng.normal(size=env.state_dim)
        np.testing.assert_array_equal(agent.act(x), result.agent.act(x))
        np.testing.assert_array_equal(scaler_back.mean, env.scaler.mean)

    def test_checkpoint_config_mismatch_rejected(self, tmp_path, env):
        result = train(env, SMALL)
        path = tmp_path / "agent.bin"
        save_agent_checkpoint(path, result.agent, SMALL, env.scaler, 1, {}, {})
        with pytest.raises(CheckpointError, match="hidden"):
            load_agent_checkpoint(path, TD3Config(hidden=(4,)))

    def test_resume_continues_epoch_numbering(self, tmp_path, env):
        first = train(env, SMALL, out_dir=tmp_path)
        more = train(env, SMALL, out_dir=tmp_path, resume=first.final_checkpoint)
        assert [row["epoch"] for row in more.log] == [4, 5, 6]
        assert more.agent.critic_updates == 2 * SMALL.epochs * env.n_steps

    def test_divergence_saves_abort_checkpoint(self, tmp_path, env, monkeypatch):
        def explode(*args, **kwargs):
            raise TrainingDivergenceError("boom")

        monkeypatch.setattr(td3, "critic_update", explode)
        with pytest.raises(TrainingDivergenceError):
            train(env, SMALL, out_dir=tmp_path)
        assert (tmp_path / "checkpoint_abort.bin").exists()

    def test_exploration_noise_changes_behaviour(self, panel, features, scaler):
        def final_actor(noise):
            env = PortfolioEnv(panel, features, scaler, features.dates[0], features.dates[10])
            cfg = TD3Config(hidden=(8, 8), epochs=3, exploration_noise=noise, seed=1)
            return train(env, cfg).agent.actor

        a = final_actor(0.1)
        b = final_actor(0.3)
        assert any(not np.array_equal(w1, w2) for w1, w2 in zip(a.weights, b.weights))
