"""PPO: schedules, GAE, the clipped-surrogate loss, Adam, rollouts and finetuning."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Optional

import numpy as np

from .agent import SAMPLE, check_layout, decide, selected_log_prob
from .policy import Policy
from .sim import DEFAULT_ROSTER, DIFFICULTY_ORDER, MicroFighterEnv, RewardConfig, Roster, Rules
from .sim.engine import DEFAULT_RULES
from .sim.moves import ActionCommand
from .skip import PER_DECISION_SUM, PER_FRAME_DISCOUNTED, REWARD_MODES, SkipStrategy, macro_step, parse_strategy
from .telemetry import EpisodeTrace, TelemetryRow, distribution_telemetry

log = logging.getLogger(__name__)


class NonFiniteLossError(FloatingPointError):
    pass


def linear_schedule(start: float, end: float, progress: float) -> float:
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress {progress} outside [0, 1]")
    # exact endpoints
    if progress == 0.0:
        return start
    if progress == 1.0:
        return end
    return start + progress * (end - start)


@dataclass
class TrainConfig:
    strategy: str = "fixed:8"
    total_steps: int = 300_000
    n_envs: int = 8
    rollout_len: int = 512
    batch_size: int = 1024
    epochs: int = 20
    lr_start: float = 2.5e-4
    lr_end: float = 2.5e-6
    clip_start: float = 0.15
    clip_end: float = 0.025
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    gamma: float = 0.94
    gae_lambda: float = 0.95
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True
    dense_start: float = 3.0
    dense_end: float = 1.0
    aggressive_start: float = 1.0
    aggressive_end: float = 0.0
    win_bonus: float = 1.0
    lose_penalty: float = 1.0
    reward_mode: str = PER_DECISION_SUM
    frame_gamma: float = 0.94 ** (1 / 8)
    opponents: list = field(default_factory=lambda: ["pulse_bot"])
    levels: list = field(default_factory=lambda: list(range(1, 9)))
    hidden: list = field(default_factory=lambda: [128, 128])
    seed: int = 0

    def __post_init__(self):
        self.validate()

    @property
    def rollout_size(self) -> int:
        return self.n_envs * self.rollout_len

    @property
    def n_updates(self) -> int:
        return max(1, math.ceil(self.total_steps / self.rollout_size))

    def skip_strategy(self) -> SkipStrategy:
        return parse_strategy(self.strategy)

    def validate(self) -> None:
        for name in ("total_steps", "n_envs", "rollout_len", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.rollout_size % self.batch_size:
            raise ValueError(
                f"batch_size {self.batch_size} must divide n_envs * rollout_len = {self.rollout_size}"
            )
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if not 0.0 < self.frame_gamma <= 1.0:
            raise ValueError("frame_gamma must be in (0, 1]")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if not self.opponents:
            raise ValueError("opponents must be nonempty")
        if not self.levels or any(not 1 <= int(lv) <= 8 for lv in self.levels):
            raise ValueError("levels must be a nonempty subset of 1..8")
        self.skip_strategy()

    def lr(self, progress: float) -> float:
        return linear_schedule(self.lr_start, self.lr_end, progress)

    def clip(self, progress: float) -> float:
        return linear_schedule(self.clip_start, self.clip_end, progress)

    def reward_config(self, progress: float) -> RewardConfig:
        return RewardConfig(
            dense_coef=linear_schedule(self.dense_start, self.dense_end, progress),
            aggressive_coef=linear_schedule(self.aggressive_start, self.aggressive_end, progress),
            win_bonus=self.win_bonus,
            lose_penalty=self.lose_penalty,
        )


# -- advantage estimation ------------------------------------------------------

def gae(rewards, values, terminated, truncated, last_value, gamma, lam, truncation_values=None):
    """Generalized advantage estimates over a time-major rollout.

    Arrays are (T,) or (T, n_envs). ``gamma`` may be a scalar or a per-step
    array (used for per-frame discounting, where each decision discounts by
    frame_gamma ** frames_advanced). A terminated step has no successor value;
    a truncated step bootstraps from ``truncation_values[t]`` and cuts the
    advantage chain.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    term = np.asarray(terminated, dtype=bool)
    trunc = np.asarray(truncated, dtype=bool)
    if not (r.shape == v.shape == term.shape == trunc.shape):
        raise ValueError("rewards, values and flags must have equal shapes")
    g = np.broadcast_to(np.asarray(gamma, dtype=np.float64), r.shape)
    tv = np.zeros_like(v) if truncation_values is None else np.asarray(truncation_values, dtype=np.float64)
    if tv.shape != r.shape:
        raise ValueError("truncation_values must match rewards")
    adv = np.zeros_like(r)
    next_value = np.asarray(last_value, dtype=np.float64) * np.ones(r.shape[1:])
    next_adv = np.zeros(r.shape[1:])
    for t in range(r.shape[0] - 1, -1, -1):
        boundary = term[t] | trunc[t]
        nv = np.where(term[t], 0.0, np.where(trunc[t], tv[t], next_value))
        delta = r[t] + g[t] * nv - v[t]
        adv[t] = delta + g[t] * lam * np.where(boundary, 0.0, next_adv)
        next_adv = adv[t]
        next_value = v[t]
    return adv, adv + v


# -- loss ------------------------------------------------------------------------

@dataclass
class Batch:
    obs: np.ndarray
    action_idx: np.ndarray
    skip_idx: np.ndarray
    old_log_prob: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def normalize(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def ppo_loss(policy: Policy, batch: Batch, clip: float, value_coef: float, entropy_coef: float,
             normalize_advantages: bool = True):
    """Clipped-surrogate loss and its exact gradient w.r.t. every parameter.

    Returns (loss, grads, info).
    """
    fwd = policy.forward(batch.obs)
    n = batch.obs.shape[0]
    adv = normalize(batch.advantages) if normalize_advantages else np.asarray(batch.advantages, dtype=np.float64)
    new_lp, heads = selected_log_prob(policy, fwd.logits, batch.action_idx, batch.skip_idx)
    log_ratio = new_lp - batch.old_log_prob
    ratio = np.exp(log_ratio)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    value_err = fwd.value - batch.returns
    value_loss = np.mean(value_err ** 2)
    ent = np.zeros(n)
    probs = {}
    for name, (lp, _) in heads.items():
        p = np.exp(lp)
        probs[name] = p
        ent -= np.sum(p * lp, axis=1)
    loss = policy_loss + value_coef * value_loss - entropy_coef * ent.mean()

    d_lp = -(adv * ratio) / n * (surr1 <= surr2)
    rows = np.arange(n)
    grad_logits = {}
    for name, (lp, idx) in heads.items():
        p = probs[name]
        h = -np.sum(p * lp, axis=1)
        g = -d_lp[:, None] * p
        g[rows, idx] += d_lp
        g += (entropy_coef / n) * p * (lp + h[:, None])
        grad_logits[name] = g
    grad_value = value_coef * 2.0 * value_err / n
    grads = policy.backward(fwd, grad_logits, grad_value)
    info = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": ent.mean(),
        "approx_kl": np.mean((ratio - 1.0) - log_ratio),
        "clip_fraction": np.mean(np.abs(ratio - 1.0) > clip),
    }
    return loss, grads, info


# -- optimizer ---------------------------------------------------------------------

class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[k] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads.values():
            g *= scale
    return norm


# -- rollouts ----------------------------------------------------------------------

@dataclass
class RolloutBuffer:
    obs: np.ndarray  # (T, E, obs_dim)
    action_idx: np.ndarray
    skip_idx: np.ndarray
    log_prob: np.ndarray
    value: np.ndarray
    reward: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    frames: np.ndarray
    truncation_value: np.ndarray
    discount: np.ndarray  # per-step gamma
    last_value: np.ndarray = None
    advantages: np.ndarray = None
    returns: np.ndarray = None

    @classmethod
    def empty(cls, t: int, e: int, obs_dim: int) -> "RolloutBuffer":
        z = lambda dtype=np.float64: np.zeros((t, e), dtype=dtype)  # noqa: E731
        return cls(np.zeros((t, e, obs_dim)), z(np.int64), z(np.int64), z(), z(), z(),
                   z(bool), z(bool), z(np.int64), z(), z())

    def compute_advantages(self, lam: float) -> None:
        self.advantages, self.returns = gae(self.reward, self.value, self.terminated, self.truncated,
                                            self.last_value, self.discount, lam, self.truncation_value)

    def flat(self) -> Batch:
        n = self.reward.size
        return Batch(self.obs.reshape(n, -1), self.action_idx.reshape(n), self.skip_idx.reshape(n),
                     self.log_prob.reshape(n), self.advantages.reshape(n), self.returns.reshape(n))


class _Slot:
    """One environment lane of the collector, with its running episode."""

    def __init__(self, env: MicroFighterEnv):
        self.env = env
        self.obs = None
        self.trace: Optional[EpisodeTrace] = None


class Trainer:
    """Owns the policy, optimizer, environments and RNG for one training run."""

    def __init__(self, cfg: TrainConfig, policy: Optional[Policy] = None, rules: Rules = DEFAULT_RULES,
                 roster: Roster = DEFAULT_ROSTER):
        self.cfg = cfg
        self.strategy = cfg.skip_strategy()
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.slots = [_Slot(MicroFighterEnv(rules, roster)) for _ in range(cfg.n_envs)]
        obs_dim = self.slots[0].env.obs_dim
        if policy is None:
            policy = Policy.init(self.strategy.layout, obs_dim, self.strategy.n_skips,
                                 tuple(cfg.hidden), self.rng)
        check_layout(policy, self.strategy)
        self.policy = policy
        self.optimizer = Adam(policy.params)
        self.steps_done = 0
        self.updates_done = 0
        self.episodes_done = 0
        self.telemetry: list[TelemetryRow] = []
        self.diagnostics: list[dict] = []
        self.opponents = list(cfg.opponents)

    # episode management
    def _reset(self, slot: _Slot) -> None:
        seed = int(self.rng.integers(2 ** 31))
        opp = self.opponents[int(self.rng.integers(len(self.opponents)))]
        level = int(self.cfg.levels[int(self.rng.integers(len(self.cfg.levels)))])
        slot.obs = slot.env.reset(seed, opp, level)
        slot.trace = EpisodeTrace()

    def set_opponents(self, opponents: list[str]) -> None:
        """Switch the training roster; running episodes are abandoned."""
        self.opponents = list(opponents)
        for slot in self.slots:
            self._reset(slot)

    @property
    def progress(self) -> float:
        return min(1.0, self.steps_done / self.cfg.total_steps)

    def collect(self) -> tuple[RolloutBuffer, float]:
        cfg, strat = self.cfg, self.strategy
        for slot in self.slots:
            if slot.obs is None:
                self._reset(slot)
        progress = self.progress
        reward_cfg = cfg.reward_config(progress)
        frame_mode = cfg.reward_mode == PER_FRAME_DISCOUNTED
        buf = RolloutBuffer.empty(cfg.rollout_len, cfg.n_envs, self.slots[0].env.obs_dim)
        for t in range(cfg.rollout_len):
            obs = np.stack([s.obs for s in self.slots])
            d = decide(self.policy, strat, obs, self.rng, SAMPLE)
            buf.obs[t] = obs
            buf.action_idx[t] = d.action_idx
            buf.skip_idx[t] = d.skip_idx
            buf.log_prob[t] = d.log_prob
            buf.value[t] = d.value
            for i, slot in enumerate(self.slots):
                slot.trace.add(d.action_probs[i], d.skip_probs[i])
                res = macro_step(slot.env, ActionCommand.from_flat(int(d.action_idx[i])), d.skips[i],
                                 reward_cfg, cfg.reward_mode, cfg.frame_gamma)
                slot.trace.reward += res.reward
                slot.trace.frames += res.frames_advanced
                buf.reward[t, i] = res.reward
                buf.frames[t, i] = res.frames_advanced
                buf.discount[t, i] = cfg.frame_gamma ** res.frames_advanced if frame_mode else cfg.gamma
                if res.terminal:
                    if res.truncated:
                        buf.truncated[t, i] = True
                        buf.truncation_value[t, i] = self.policy.forward(res.obs).value[0]
                    else:
                        buf.terminated[t, i] = True
                    self.telemetry.append(distribution_telemetry(slot.trace, strat, self.episodes_done))
                    self.episodes_done += 1
                    self._reset(slot)
                else:
                    slot.obs = res.obs
        buf.last_value = self.policy.forward(np.stack([s.obs for s in self.slots])).value
        buf.compute_advantages(cfg.gae_lambda)
        self.steps_done += buf.reward.size
        return buf, progress

    def update(self, buf: RolloutBuffer, progress: float) -> dict:
        diag = ppo_update(self.policy, buf, self.optimizer, self.cfg, progress, self.rng)
        self.updates_done += 1
        diag.update(update=self.updates_done, steps=self.steps_done, episodes=self.episodes_done)
        self.diagnostics.append(diag)
        return diag

    def train(self, n_updates: Optional[int] = None, on_update: Optional[Callable[["Trainer"], None]] = None):
        n = self.cfg.n_updates - self.updates_done if n_updates is None else n_updates
        for _ in range(n):
            buf, progress = self.collect()
            diag = self.update(buf, progress)
            log.info("update %d steps %d kl %.4f ent %.3f", diag["update"], diag["steps"],
                     diag["approx_kl"], diag["entropy"])
            if on_update is not None:
                on_update(self)
        return self


def ppo_update(policy: Policy, buf: RolloutBuffer, opt: Adam, cfg: TrainConfig, progress: float,
               rng: np.random.Generator) -> dict:
    lr, clip = cfg.lr(progress), cfg.clip(progress)
    data = buf.flat()
    n = data.obs.shape[0]
    sums: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            mb = Batch(data.obs[idx], data.action_idx[idx], data.skip_idx[idx], data.old_log_prob[idx],
                       data.advantages[idx], data.returns[idx])
            loss, grads, info = ppo_loss(policy, mb, clip, cfg.value_coef, cfg.entropy_coef,
                                         cfg.normalize_advantages)
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss {loss} at progress {progress:.4f}: {info}")
            info["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            opt.step(policy.params, grads, lr)
            for k, v in info.items():
                sums[k] = sums.get(k, 0.0) + float(v)
            count += 1
    out = {k: v / count for k, v in sums.items()}
    out.update(lr=lr, clip=clip, progress=progress)
    return out


# -- finetuning --------------------------------------------------------------------

FINETUNE_OVERRIDES = {"lr_start": 5.0e-5, "lr_end": 2.5e-6, "clip_start": 0.075, "clip_end": 0.025}


def finetune_config(base: TrainConfig, budget_fraction: float = 0.2) -> TrainConfig:
    """Base config with the finetuning schedules and a fifth of the step budget."""
    kw = {f.name: getattr(base, f.name) for f in fields(base)}
    kw.update(FINETUNE_OVERRIDES)
    kw["total_steps"] = max(1, int(round(base.total_steps * budget_fraction)))
    return TrainConfig(**kw)


def difficulty_sorted(opponents: list[str]) -> list[str]:
    rank = {name: i for i, name in enumerate(DIFFICULTY_ORDER)}
    return sorted(opponents, key=lambda o: (rank.get(o, len(rank)), o))


@dataclass
class FinetuneResult:
    opponent: str  # single: that opponent; sequential: "+"-joined visiting order
    trainer: Trainer
    switches: list = field(default_factory=list)  # (update, steps, episode, opponent)


def finetune(policy: Policy, opponents: list[str], mode: str, cfg: TrainConfig,
             rules: Rules = DEFAULT_RULES, roster: Roster = DEFAULT_ROSTER,
             on_update: Optional[Callable[[Trainer], None]] = None) -> list[FinetuneResult]:
    """Continue training ``policy`` against new opponents.

    ``cfg`` is used as given (build it with :func:`finetune_config`).
    single: one independent run per opponent, each with the whole budget.
    sequential: one run over the opponents in ascending difficulty, with the
    update budget split equally between them.
    """
    if not opponents:
        raise ValueError("finetune needs at least one opponent")
    for o in opponents:
        roster.check(o, 1)
    if mode == "single":
        out = []
        for opp in opponents:
            run_cfg = TrainConfig(**{**_asdict(cfg), "opponents": [opp]})
            tr = Trainer(run_cfg, policy.copy(), rules, roster)
            tr.train(on_update=on_update)
            out.append(FinetuneResult(opp, tr))
        return out
    if mode != "sequential":
        raise ValueError(f"unknown finetune mode {mode!r}")
    order = difficulty_sorted(opponents)
    run_cfg = TrainConfig(**{**_asdict(cfg), "opponents": [order[0]]})
    per = max(1, run_cfg.n_updates // len(order))
    total = per * len(order)
    run_cfg.total_steps = total * run_cfg.rollout_size
    tr = Trainer(run_cfg, policy.copy(), rules, roster)
    switches = []
    for opp in order:
        tr.set_opponents([opp])
        switches.append((tr.updates_done, tr.steps_done, tr.episodes_done, opp))
        tr.train(per, on_update=on_update)
    return [FinetuneResult("+".join(order), tr, switches)]


def _asdict(cfg: TrainConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}
