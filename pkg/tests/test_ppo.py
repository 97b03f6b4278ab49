import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_gae
from skipfight.policy import Policy, sample
from skipfight.ppo import (
    Adam,
    Batch,
    NonFiniteLossError,
    RolloutBuffer,
    TrainConfig,
    Trainer,
    difficulty_sorted,
    finetune,
    finetune_config,
    gae,
    linear_schedule,
    normalize,
    ppo_loss,
    ppo_update,
)
from skipfight.sim import Rules

TINY = dict(n_envs=2, rollout_len=16, batch_size=16, epochs=2, hidden=[16, 16])


def test_linear_schedule_examples():
    assert linear_schedule(2.5e-4, 2.5e-6, 0) == 2.5e-4
    assert linear_schedule(0.15, 0.025, 1) == 0.025
    assert linear_schedule(3.0, 1.0, 0.5) == 2.0
    for bad in (-0.01, 1.01, math.nan):
        with pytest.raises(ValueError):
            linear_schedule(0.0, 1.0, bad)


def test_config_schedules():
    cfg = TrainConfig()
    assert (cfg.lr(0), cfg.lr(1), cfg.clip(0), cfg.clip(1)) == (2.5e-4, 2.5e-6, 0.15, 0.025)
    start, end = cfg.reward_config(0), cfg.reward_config(1)
    assert (start.dense_coef, start.aggressive_coef, end.dense_coef, end.aggressive_coef) == (3.0, 1.0, 1.0, 0.0)


def test_config_defaults_and_validation():
    cfg = TrainConfig()
    assert (cfg.n_envs, cfg.rollout_len, cfg.batch_size, cfg.epochs) == (8, 512, 1024, 20)
    assert cfg.rollout_size == 4096 and cfg.rollout_size // cfg.batch_size == 4
    assert cfg.gamma == 0.94 and cfg.entropy_coef == 0.01
    with pytest.raises(ValueError, match="batch"):
        TrainConfig(batch_size=1000)
    with pytest.raises(ValueError):
        TrainConfig(gamma=0.0)
    with pytest.raises(ValueError):
        TrainConfig(gae_lambda=1.5)
    with pytest.raises(ValueError):
        TrainConfig(strategy="warp:3")


def test_gae_lambda_zero_is_td_error():
    r, v = np.array([1.0, 2.0, 3.0]), np.array([0.5, 0.1, -0.2])
    done = np.array([False, False, False])
    adv, ret = gae(r, v, done, done, 0.7, 0.9, 0.0)
    np.testing.assert_allclose(adv, r + 0.9 * np.array([0.1, -0.2, 0.7]) - v, atol=1e-15)
    np.testing.assert_allclose(ret, adv + v, atol=1e-15)


def test_gae_lambda_one_is_monte_carlo():
    r, v = np.array([1.0, 0.0, 2.0, 1.0]), np.array([0.3, 0.2, 0.1, 0.0])
    term = np.array([False, False, False, True])
    adv, _ = gae(r, v, term, np.zeros(4, bool), 123.0, 0.9, 1.0)
    mc = [sum(0.9 ** (k - t) * r[k] for k in range(t, 4)) for t in range(4)]
    np.testing.assert_allclose(adv, np.array(mc) - v, atol=1e-12)


def test_gae_three_step_episode():
    adv, _ = gae([1.0, 0.0, 1.0], [0.5, 0.5, 0.5], [False, False, True], [False, False, False], 0.0, 0.94, 0.95)
    expected = brute_force_gae([1.0, 0.0, 1.0], [0.5, 0.5, 0.5], [False, False, True], 0.0, 0.94, 0.95)
    np.testing.assert_allclose(adv, expected, atol=1e-12)
    # hand values: deltas (0.97, -0.03, 0.5)
    assert adv[2] == pytest.approx(0.5)
    assert adv[1] == pytest.approx(-0.03 + 0.893 * 0.5)


def test_gae_truncation_bootstraps_and_cuts():
    adv, _ = gae([1.0, 1.0], [0.0, 0.0], [False, False], [True, False], 5.0, 0.5, 1.0,
                 truncation_values=[2.0, 0.0])
    assert adv[0] == 1.0 + 0.5 * 2.0  # no leakage from the next episode
    assert adv[1] == 1.0 + 0.5 * 5.0


def test_gae_shape_mismatch():
    with pytest.raises(ValueError):
        gae([1.0, 2.0], [0.0], [False], [False], 0.0, 0.9, 0.9)


@given(st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.booleans()), min_size=1, max_size=10),
       st.floats(-5, 5), st.floats(0.01, 1.0), st.floats(0.0, 1.0))
def test_gae_matches_brute_force(steps, last, gamma, lam):
    r, v, d = (list(x) for x in zip(*steps))
    adv, _ = gae(r, v, d, [False] * len(r), last, gamma, lam)
    np.testing.assert_allclose(adv, brute_force_gae(r, v, d, last, gamma, lam), atol=1e-10, rtol=0)


def _batch(policy, rng, n=32):
    from skipfight.agent import selected_log_prob

    obs = rng.standard_normal((n, policy.obs_dim))
    a = rng.integers(0, policy.n_actions, n)
    s = rng.integers(0, policy.n_skips, n)
    lp, _ = selected_log_prob(policy, policy.forward(obs).logits, a, s)
    return Batch(obs, a, s, lp, rng.standard_normal(n), rng.standard_normal(n))


def test_ratio_identity():
    pol = Policy.init("separated", 10, 5, (8,))
    b = _batch(pol, np.random.default_rng(0))
    _, _, info = ppo_loss(pol, b, 0.2, 0.5, 0.01)
    assert info["clip_fraction"] == 0.0
    assert abs(info["approx_kl"]) < 1e-15
    assert abs(info["policy_loss"] - (-normalize(b.advantages).mean())) < 1e-15
    assert abs(info["policy_loss"]) < 1e-9


def test_inside_band_gradient_equals_unclipped():
    pol = Policy.init("combined", 10, 3, (8,), np.random.default_rng(1))
    b = _batch(pol, np.random.default_rng(1))
    b.old_log_prob = b.old_log_prob + 0.01
    _, g_clip, info = ppo_loss(pol, b, 0.2, 0.5, 0.0)
    assert info["clip_fraction"] == 0.0
    _, g_free, _ = ppo_loss(pol, b, 1e6, 0.5, 0.0)
    for k in g_clip:
        np.testing.assert_allclose(g_clip[k], g_free[k], atol=1e-15)


@given(st.floats(-3, 3), st.floats(0.0, 3.0), st.floats(0.01, 0.5))
def test_clipped_objective_bound(adv, ratio, eps):
    clipped = min(ratio * adv, float(np.clip(ratio, 1 - eps, 1 + eps)) * adv)
    assert clipped <= ratio * adv + 1e-12
    if adv > 0 and ratio > 1 + eps:
        assert clipped == pytest.approx((1 + eps) * adv)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200).filter(lambda xs: np.std(xs) > 1e-3))
def test_advantage_normalization(xs):
    z = normalize(np.array(xs))
    assert abs(z.mean()) < 1e-9
    assert abs(z.std() - 1.0) < 1e-6


def test_adam_first_step():
    params = {"w": np.array([0.5])}
    opt = Adam(params)
    opt.step(params, {"w": np.array([1.0])}, 0.001)
    assert params["w"][0] == pytest.approx(0.5 - 0.001, abs=1e-10)
    assert opt.t == 1


def _bandit_buffer(policy, rng, n):
    obs = np.ones((n, 1, policy.obs_dim))
    logits = policy.forward(obs[:, 0]).logits["action"]
    a = sample(logits, rng)
    buf = RolloutBuffer.empty(n, 1, policy.obs_dim)
    buf.obs[:] = obs
    buf.action_idx[:, 0] = a
    lp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    buf.log_prob[:, 0] = lp[np.arange(n), a]
    buf.value[:, 0] = policy.forward(obs[:, 0]).value
    buf.reward[:, 0] = (a == 0).astype(float)
    buf.terminated[:] = True
    buf.discount[:] = 0.94
    buf.last_value = np.zeros(1)
    buf.compute_advantages(0.95)
    return buf


def test_bandit_learns_rewarding_arm():
    cfg = TrainConfig(n_envs=1, rollout_len=64, batch_size=64, epochs=4, lr_start=3e-3, lr_end=3e-3,
                      total_steps=64 * 200)
    rng = np.random.default_rng(0)
    pol = Policy.init("action", 4, hidden=(16,), rng=rng, n_actions=2)
    opt = Adam(pol.params)
    for u in range(200):
        ppo_update(pol, _bandit_buffer(pol, rng, 64), opt, cfg, u / 200, rng)
        p = np.exp(pol.forward(np.ones(4)).head("action"))
        if p[0] / p.sum() > 0.99:
            break
    assert p[0] / p.sum() > 0.99


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts():
    cfg = TrainConfig(n_envs=1, rollout_len=8, batch_size=8, epochs=1)
    pol = Policy.init("action", 4, hidden=(4,), n_actions=2)
    buf = _bandit_buffer(pol, np.random.default_rng(0), 8)
    buf.returns[0, 0] = np.inf
    with pytest.raises(NonFiniteLossError):
        ppo_update(pol, buf, Adam(pol.params), cfg, 0.0, np.random.default_rng(0))


def test_fixed_sixty_rollout_frames():
    rules = Rules(max_hp=10 ** 9, round_time_limit=10 ** 9)
    cfg = TrainConfig(strategy="fixed:60", n_envs=1, rollout_len=512, batch_size=512, hidden=[8])
    tr = Trainer(cfg, rules=rules)
    buf, _ = tr.collect()
    assert buf.frames.sum() == 30720
    assert tr.slots[0].env.state.frame == 30720
    assert not buf.terminated.any() and not buf.truncated.any()


def _buffer_bytes(cfg):
    buf, _ = Trainer(cfg).collect()
    return b"".join(np.ascontiguousarray(getattr(buf, k)).tobytes() for k in
                    ("obs", "action_idx", "skip_idx", "log_prob", "value", "reward", "terminated", "frames",
                     "advantages"))


def test_same_seed_same_buffer():
    cfg = TrainConfig(strategy="separated:4-8", seed=11, **TINY)
    assert _buffer_bytes(cfg) == _buffer_bytes(cfg)
    assert _buffer_bytes(cfg) != _buffer_bytes(TrainConfig(strategy="separated:4-8", seed=12, **TINY))


def test_terminated_and_truncated_exclusive():
    cfg = TrainConfig(strategy="fixed:60", **TINY)
    tr = Trainer(cfg, rules=Rules(round_time_limit=300))
    buf, _ = tr.collect()
    assert buf.truncated.any()
    assert not (buf.terminated & buf.truncated).any()
    assert np.all(np.isfinite(buf.log_prob))


def test_layout_mismatch_rejected():
    pol = Policy.init("separated", 192, 5)
    with pytest.raises(ValueError, match="layout"):
        Trainer(TrainConfig(strategy="fixed:4", **TINY), pol)
    with pytest.raises(ValueError):
        Trainer(TrainConfig(strategy="separated:4-16", **TINY), pol)


def test_training_moves_parameters_and_logs():
    cfg = TrainConfig(strategy="combined:4-8", total_steps=64, **TINY)
    tr = Trainer(cfg)
    before = tr.policy.copy()
    tr.train()
    assert tr.updates_done == 2 and tr.steps_done == 64
    assert any(not np.array_equal(before.params[k], tr.policy.params[k]) for k in before.params)
    assert {"approx_kl", "clip_fraction", "entropy", "policy_loss", "value_loss"} <= set(tr.diagnostics[-1])


def test_finetune_config():
    ft = finetune_config(TrainConfig(total_steps=300_000))
    assert (ft.lr(0), ft.clip(0), ft.lr(1), ft.clip(1)) == (5.0e-5, 0.075, 2.5e-6, 0.025)
    assert ft.total_steps == 60_000


def test_difficulty_order():
    assert difficulty_sorted(["counter_bot", "pulse_bot", "turtle_bot"]) == ["pulse_bot", "turtle_bot", "counter_bot"]
    assert difficulty_sorted(["turtle_bot", "turtle_bot"]) == ["turtle_bot", "turtle_bot"]


def test_finetune_single_runs_each_opponent_with_same_budget():
    cfg = TrainConfig(strategy="fixed:8", total_steps=64, **TINY)
    pol = Policy.init("action", 192, hidden=(16, 16))
    res = finetune(pol, ["rush_bot", "turtle_bot", "zoner_bot"], "single", cfg)
    assert [r.opponent for r in res] == ["rush_bot", "turtle_bot", "zoner_bot"]
    assert {r.trainer.steps_done for r in res} == {64}
    # the starting policy is left alone
    assert all(r.trainer.policy is not pol for r in res)


def test_finetune_sequential_switches_evenly():
    cfg = TrainConfig(strategy="fixed:8", total_steps=6 * 32, **TINY)
    pol = Policy.init("action", 192, hidden=(16, 16))
    (res,) = finetune(pol, ["zoner_bot", "pulse_bot", "rush_bot"], "sequential", cfg)
    assert res.opponent == "pulse_bot+rush_bot+zoner_bot"
    assert [s[0] for s in res.switches] == [0, 2, 4]
    assert [s[1] for s in res.switches] == [0, 64, 128]
    assert [s[3] for s in res.switches] == ["pulse_bot", "rush_bot", "zoner_bot"]
    assert res.trainer.steps_done == 192


def test_finetune_errors():
    pol = Policy.init("action", 192, hidden=(16, 16))
    cfg = TrainConfig(strategy="fixed:8", **TINY)
    with pytest.raises(ValueError):
        finetune(pol, [], "single", cfg)
    with pytest.raises(ValueError):
        finetune(pol, ["pulse_bot"], "shuffled", cfg)


@settings(max_examples=5, deadline=None)
@given(st.sampled_from(["fixed:4", "random:4-8", "separated:4-16", "combined:4-8"]), st.integers(0, 1000))
def test_progress_counts_decisions(strategy, seed):
    cfg = TrainConfig(strategy=strategy, seed=seed, total_steps=96, **TINY)
    tr = Trainer(cfg)
    tr.train(1)
    assert tr.progress == pytest.approx(32 / 96)
