"""Frame-skip regimes and the macro-step that holds one command for N frames."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .sim.env import MicroFighterEnv
from .sim.moves import ActionCommand
from .sim.reward import RewardConfig, shaped_reward

FIXED, RANDOM, SEPARATED, COMBINED = "fixed", "random", "separated", "combined"
LEARNED = (SEPARATED, COMBINED)

PER_DECISION_SUM = "per-decision-sum"
PER_FRAME_DISCOUNTED = "per-frame-discounted"
REWARD_MODES = (PER_DECISION_SUM, PER_FRAME_DISCOUNTED)


@dataclass(frozen=True)
class SkipSet:
    values: tuple[int, ...]

    def __post_init__(self):
        v = tuple(int(x) for x in self.values)
        if not v:
            raise ValueError("skip set is empty")
        if any(x < 1 for x in v):
            raise ValueError(f"skip values must be >= 1, got {v}")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError(f"skip values must be strictly increasing, got {v}")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> int:
        return self.values[i]


@dataclass(frozen=True)
class SkipStrategy:
    variant: str
    fixed_n: int = 0
    skip_set: Optional[SkipSet] = None

    def __post_init__(self):
        if self.variant == FIXED:
            if self.fixed_n < 1:
                raise ValueError(f"fixed frame-skip must be >= 1, got {self.fixed_n}")
        elif self.variant in (RANDOM,) + LEARNED:
            if self.skip_set is None:
                raise ValueError(f"{self.variant} strategy needs a skip set")
        else:
            raise ValueError(f"unknown skip strategy {self.variant!r}")

    @property
    def learned(self) -> bool:
        return self.variant in LEARNED

    @property
    def values(self) -> tuple[int, ...]:
        """Every frame-skip value this strategy can produce."""
        return (self.fixed_n,) if self.variant == FIXED else self.skip_set.values

    @property
    def n_skips(self) -> int:
        return len(self.values)

    @property
    def layout(self) -> str:
        """Policy head layout needed to drive this strategy."""
        return self.variant if self.learned else "action"

    def __str__(self) -> str:
        if self.variant == FIXED:
            return f"fixed:{self.fixed_n}"
        return f"{self.variant}:{_format_set(self.skip_set.values)}"


# Published skip sets; "4-16,32" deliberately omits 10.
PRESETS = {
    "4-8": (4, 5, 6, 7, 8),
    "4-16": (4, 6, 8, 10, 12, 14, 16),
    "4-16,32": (4, 6, 8, 12, 14, 16, 32),
}


def _format_set(values: tuple[int, ...]) -> str:
    for name, preset in PRESETS.items():
        if preset == values:
            return name
    return ",".join(str(v) for v in values)


_TERM = re.compile(r"^\s*(\d+)\s*(?:-\s*(\d+)\s*)?$")


def parse_skip_set(text: str) -> SkipSet:
    """Parse a skip set: a published preset ("4-8", "4-16", "4-16,32") or a
    comma list of integers and ``lo-hi`` ranges.

    Generic ranges step by 1 when they span at most 4 and by 2 otherwise.
    """
    key = text.replace(" ", "")
    if key in PRESETS:
        return SkipSet(PRESETS[key])
    values: list[int] = []
    for term in key.split(","):
        m = _TERM.match(term)
        if not m:
            raise ValueError(f"bad skip set term {term!r} in {text!r}")
        lo = int(m.group(1))
        if m.group(2) is None:
            values.append(lo)
            continue
        hi = int(m.group(2))
        if hi < lo:
            raise ValueError(f"empty range {term!r}")
        step = 1 if hi - lo <= 4 else 2
        values.extend(range(lo, hi + 1, step))
    return SkipSet(tuple(values))


def parse_strategy(text: str) -> SkipStrategy:
    """Parse strings such as ``fixed:8``, ``random:4-8`` or ``separated:4-16,32``."""
    variant, sep, arg = text.strip().partition(":")
    variant = variant.lower()
    if not sep or not arg:
        raise ValueError(f"strategy {text!r} must look like '<variant>:<value(s)>'")
    if variant == FIXED:
        if not arg.strip().isdigit():
            raise ValueError(f"fixed strategy needs one integer, got {arg!r}")
        return SkipStrategy(FIXED, fixed_n=int(arg))
    if variant in (RANDOM,) + LEARNED:
        return SkipStrategy(variant, skip_set=parse_skip_set(arg))
    raise ValueError(f"unknown skip strategy {variant!r}")


class SkipChoice(NamedTuple):
    n_frames: int
    set_index: Optional[int] = None


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(np.cumsum(probs), rng.random() * probs.sum(), side="right"))
    return min(idx, len(probs) - 1)


def choose_skip(strategy: SkipStrategy, skip_logits=None, rng: Optional[np.random.Generator] = None) -> SkipChoice:
    if strategy.learned:
        if skip_logits is None:
            raise ValueError(f"{strategy} needs skip logits")
        logits = np.asarray(skip_logits, dtype=np.float64)
        if logits.shape != (strategy.n_skips,):
            raise ValueError(f"expected {strategy.n_skips} skip logits, got shape {logits.shape}")
        p = np.exp(logits - logits.max())
        i = _sample_index(p / p.sum(), rng)
        return SkipChoice(strategy.skip_set[i], i)
    if skip_logits is not None:
        raise ValueError(f"{strategy} does not take skip logits")
    if strategy.variant == FIXED:
        return SkipChoice(strategy.fixed_n, None)
    i = int(rng.integers(len(strategy.skip_set)))
    return SkipChoice(strategy.skip_set[i], i)


class MacroResult(NamedTuple):
    obs: np.ndarray
    reward: float
    frames_advanced: int
    terminal: bool  # knockout, or the round timer ran out
    truncated: bool  # the round ended on the timer rather than a knockout
    winner: Optional[str]


def macro_step(
    env: MicroFighterEnv,
    command: ActionCommand,
    skip: SkipChoice,
    reward_cfg: RewardConfig,
    reward_mode: str = PER_DECISION_SUM,
    frame_gamma: float = 1.0,
) -> MacroResult:
    """Hold ``command`` for up to ``skip.n_frames`` frames, stopping at round end."""
    if env.terminal:
        raise ValueError("macro_step called on a terminal environment")
    n = skip.n_frames
    if n < 1:
        raise ValueError(f"n_frames must be >= 1, got {n}")
    if reward_mode not in REWARD_MODES:
        raise ValueError(f"unknown reward mode {reward_mode!r}")
    discount = frame_gamma if reward_mode == PER_FRAME_DISCOUNTED else 1.0
    rules = env.rules
    total, weight, frames = 0.0, 1.0, 0
    winner = None
    while frames < n:
        events = env.step(command)
        frames += 1
        winner = events.round_over
        total += weight * shaped_reward(events, reward_cfg, winner, rules.max_hp, rules.round_time_limit)
        weight *= discount
        if winner is not None:
            break
    state = env.state
    truncated = winner is not None and state.p1.hp > 0 and state.p2.hp > 0
    return MacroResult(env.observe(), total, frames, winner is not None, truncated, winner)


def accumulate(rewards, reward_mode: str = PER_DECISION_SUM, frame_gamma: float = 1.0) -> float:
    """Fold per-frame rewards the way :func:`macro_step` does."""
    if reward_mode == PER_DECISION_SUM:
        return float(sum(rewards))
    total, w = 0.0, 1.0
    for r in rewards:
        total += w * r
        w *= frame_gamma
    return total
