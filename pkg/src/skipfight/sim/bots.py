"""Scripted opponent bots.

Every bot is a stationary finite-state script over the observable game state.
Levels run 1..8: higher levels shorten the reaction delay and raise the
attack cadence. ``pulse_bot`` and ``rush_bot`` are exploitable by repetition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .engine import RECOVERY, FighterState, GameState
from .moves import (
    LOW,
    OVERHEAD,
    N_ACTIONS,
    ActionCommand,
    cmd,
    combo,
)

MIN_LEVEL, MAX_LEVEL = 1, 8

FORWARD = cmd("forward")
GUARD_HIGH = cmd("defense")
GUARD_LOW = cmd("defensive_crouch")
BACK_FLIP = cmd("back_flip")


@dataclass(frozen=True)
class BotParams:
    period_l1: int  # attack cadence at level 1, in frames
    period_l8: int
    delay_l1: int  # reaction delay at level 1, in frames
    delay_l8: int
    engage: float  # distance at which the bot stops approaching

    def period(self, level: int) -> int:
        return _interp(self.period_l1, self.period_l8, level)

    def delay(self, level: int) -> int:
        return _interp(self.delay_l1, self.delay_l8, level)


def _interp(a: int, b: int, level: int) -> int:
    return max(1, round(a + (b - a) * (level - MIN_LEVEL) / (MAX_LEVEL - MIN_LEVEL)))


def _sees_attack(opp: FighterState, delay: int) -> bool:
    mv = opp.move
    return mv is not None and mv.kind != "motion" and opp.phase != RECOVERY and opp.move_elapsed >= delay


def _punishable(opp: FighterState, delay: int) -> bool:
    mv = opp.move
    return mv is not None and mv.kind != "motion" and opp.phase == RECOVERY and opp.move_elapsed >= delay


def _matching_guard(opp: FighterState) -> ActionCommand:
    return GUARD_LOW if opp.move.height == LOW else GUARD_HIGH


CORNER_MARGIN = 25.0  # arena units from the bot's own back wall
PANIC_FRAMES = 60


def _cornered(me: FighterState, width: float) -> bool:
    wall = 0.0 if me.facing > 0 else width
    return abs(me.x_pos - wall) <= CORNER_MARGIN


def pulse_bot(me, opp, frame, level, rng, memory, p, width):
    # panics for a while once pinned: it walks out with its guard down
    if memory.get("panic", -1) > frame:
        return FORWARD
    if _cornered(me, width):
        memory["panic"] = frame + PANIC_FRAMES
        return FORWARD
    dist = abs(opp.x_pos - me.x_pos)
    delay = p.delay(level)
    seen = _sees_attack(opp, delay)
    guard = GUARD_HIGH if seen and opp.move.height == OVERHEAD else GUARD_LOW
    if dist > p.engage:
        # holds ground while a move that could reach it is in progress
        threat = opp.move is not None and dist <= opp.move.reach + 4.0
        return guard if threat else FORWARD
    if frame % p.period(level) == 0 and not seen:
        return cmd("defense", "medium_punch")
    return guard


def rush_bot(me, opp, frame, level, rng, memory, p, width):
    if abs(opp.x_pos - me.x_pos) > p.engage:
        return FORWARD
    if frame % p.period(level) == 0:
        return cmd("forward", "light_punch")
    return FORWARD


def turtle_bot(me, opp, frame, level, rng, memory, p, width):
    if abs(opp.x_pos - me.x_pos) > p.engage:
        return GUARD_LOW if _sees_attack(opp, 0) else FORWARD
    if _punishable(opp, p.delay(level)) or frame % p.period(level) == 0:
        return cmd("crouch", "light_kick")
    return GUARD_LOW


def zoner_bot(me, opp, frame, level, rng, memory, p, width):
    dist = abs(opp.x_pos - me.x_pos)
    if dist < p.engage - 12.0:
        if _sees_attack(opp, p.delay(level)):
            return _matching_guard(opp)
        return BACK_FLIP
    if dist > p.engage + 12.0:
        return FORWARD
    if frame % p.period(level) == 0:
        return combo("fireball")
    return GUARD_HIGH


def mixup_bot(me, opp, frame, level, rng, memory, p, width):
    if abs(opp.x_pos - me.x_pos) > p.engage:
        return FORWARD
    if frame % p.period(level) == 0:
        return (cmd("crouch", "medium_punch"), cmd("jump", "medium_punch"), cmd("defense", "heavy_punch"))[
            int(rng.integers(3))
        ]
    # re-pick a guard stance every 8 frames
    if frame % 8 == 0 or "guard" not in memory:
        memory["guard"] = bool(rng.integers(2))
    return GUARD_LOW if memory["guard"] else GUARD_HIGH


def counter_bot(me, opp, frame, level, rng, memory, p, width):
    dist = abs(opp.x_pos - me.x_pos)
    delay = p.delay(level)
    if _sees_attack(opp, delay):
        return _matching_guard(opp)
    if dist <= 12.0 and _punishable(opp, delay):
        return combo("uppercut")
    if dist > p.engage:
        return FORWARD
    if frame % p.period(level) == 0:
        return cmd("crouch", "heavy_kick")
    return GUARD_HIGH


def random_bot(me, opp, frame, level, rng, memory, p, width):
    if frame % p.period(level) == 0 or "cmd" not in memory:
        memory["cmd"] = int(rng.integers(N_ACTIONS))
    return ActionCommand.from_flat(memory["cmd"])


def adaptive_timer_bot(me, opp, frame, level, rng, memory, p, width):
    dist = abs(opp.x_pos - me.x_pos)
    delay = p.delay(level)
    if opp.move is None:
        memory["idle"] = memory.get("idle", 0) + 1
    else:
        memory["idle"] = 0
    if _sees_attack(opp, delay):
        return _matching_guard(opp)
    if dist <= 15.0 and _punishable(opp, delay):
        return cmd("defense", "heavy_punch")
    if dist > p.engage:
        return FORWARD
    # attack into an opponent that has stayed idle for a full cadence
    if memory["idle"] >= p.period(level):
        memory["idle"] = 0
        return cmd("defense", "medium_punch") if opp.crouching else cmd("crouch", "medium_punch")
    return GUARD_HIGH if not opp.crouching else GUARD_LOW


BotFn = Callable[..., ActionCommand]

BOT_SCRIPTS: dict[str, BotFn] = {
    "pulse_bot": pulse_bot,
    "rush_bot": rush_bot,
    "turtle_bot": turtle_bot,
    "zoner_bot": zoner_bot,
    "mixup_bot": mixup_bot,
    "counter_bot": counter_bot,
    "random_bot": random_bot,
    "adaptive_timer_bot": adaptive_timer_bot,
}

DEFAULT_BOT_PARAMS: dict[str, BotParams] = {
    "pulse_bot": BotParams(40, 19, 8, 3, 14.0),
    "rush_bot": BotParams(10, 3, 12, 5, 12.0),
    "turtle_bot": BotParams(50, 22, 14, 6, 12.0),
    "zoner_bot": BotParams(70, 35, 14, 6, 40.0),
    "mixup_bot": BotParams(36, 16, 12, 5, 14.0),
    "counter_bot": BotParams(60, 30, 12, 4, 14.0),
    "random_bot": BotParams(20, 6, 12, 5, 14.0),
    "adaptive_timer_bot": BotParams(45, 20, 12, 4, 14.0),
}

# ascending difficulty, used for sequential finetuning order
DIFFICULTY_ORDER = (
    "pulse_bot", "rush_bot", "random_bot", "turtle_bot",
    "zoner_bot", "mixup_bot", "adaptive_timer_bot", "counter_bot",
)


class UnknownOpponentError(KeyError):
    pass


@dataclass
class Roster:
    params: dict[str, BotParams]
    # variant id -> script it runs (default: the id itself)
    scripts: dict[str, str] = field(default_factory=dict)

    @classmethod
    def default(cls) -> "Roster":
        return cls(dict(DEFAULT_BOT_PARAMS))

    def check(self, opponent_id: str, level: int) -> None:
        if opponent_id not in self.params or self.scripts.get(opponent_id, opponent_id) not in BOT_SCRIPTS:
            raise UnknownOpponentError(f"unknown opponent {opponent_id!r}")
        if not MIN_LEVEL <= level <= MAX_LEVEL:
            raise ValueError(f"level {level} outside {MIN_LEVEL}..{MAX_LEVEL}")

    def act(self, opponent_id: str, level: int, state: GameState, rng: np.random.Generator,
            memory: dict, as_p1: bool = False) -> ActionCommand:
        me, opp = (state.p1, state.p2) if as_p1 else (state.p2, state.p1)
        return BOT_SCRIPTS[self.scripts.get(opponent_id, opponent_id)](
            me, opp, state.frame, level, rng, memory, self.params[opponent_id], state.arena_width
        )


DEFAULT_ROSTER = Roster.default()


def scripted_bot_act(opponent_id: str, level: int, state: GameState, rng=None,
                     roster: Roster = DEFAULT_ROSTER) -> ActionCommand:
    """Command for the bot controlling p2 on this frame."""
    roster.check(opponent_id, level)
    if state.terminal:
        raise ValueError("scripted bots do not act on terminal states")
    return roster.act(opponent_id, level, state, rng if rng is not None else state.rng, state.bot_memory)
