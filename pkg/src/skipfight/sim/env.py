"""Stateful MicroFighter environment: one agent (p1) against a scripted bot (p2)."""

from __future__ import annotations

import csv
from collections import deque
from typing import Optional

import numpy as np

from .bots import DEFAULT_ROSTER, Roster
from .engine import DEFAULT_RULES, FighterState, FrameEvents, GameState, Rules, advance, initial_state
from .moves import LOW, OVERHEAD, ActionCommand

N_STACK = 12
STRIDE = 8
SNAPSHOT_DIM = 16

_PHASE_CODE = (1 / 3, 2 / 3, 1.0)


def _fighter_features(f: FighterState, width: float, max_hp: int) -> tuple:
    mv = f.move
    if mv is None:
        phase = remaining = code = 0.0
    else:
        phase = _PHASE_CODE[f.phase]
        remaining = min(f.frames_remaining / 60.0, 1.0)
        if mv.kind == "motion":
            code = 0.25
        else:
            code = -0.5 if mv.height == LOW else 1.0 if mv.height == OVERHEAD else 0.5
    if f.guard:
        stance = -1.0 if f.guard_low else 1.0
    elif f.airborne:
        stance = 0.5
    elif f.crouching:
        stance = -0.5
    else:
        stance = 0.0
    return (
        2.0 * f.x_pos / width - 1.0,
        f.hp / max_hp,
        phase,
        remaining,
        code,
        min(f.stun_frames / 20.0, 1.0),
        stance,
    )


def snapshot(state: GameState, rules: Rules) -> tuple:
    """Fixed-length normalized features for one frame, all in [-1, 1]."""
    a = _fighter_features(state.p1, rules.arena_width, rules.max_hp)
    b = _fighter_features(state.p2, rules.arena_width, rules.max_hp)
    return a + b + (float(state.p1.facing), 1.0 - 2.0 * state.frame / state.round_time_limit)


def observe(history, n_stack: int = N_STACK, stride: int = STRIDE) -> np.ndarray:
    """Concatenate ``n_stack`` snapshots taken every ``stride`` frames, newest first.

    Slots older than the recorded history repeat the oldest snapshot.
    """
    if not history:
        raise ValueError("observation history is empty")
    last = len(history) - 1
    rows = [history[max(last - k * stride, 0)] for k in range(n_stack)]
    return np.array(rows, dtype=np.float64).ravel()


class MicroFighterEnv:
    """One round of MicroFighter with the agent as p1.

    Not thread-safe; use one instance per worker.
    """

    def __init__(self, rules: Rules = DEFAULT_RULES, roster: Roster = DEFAULT_ROSTER,
                 n_stack: int = N_STACK, stride: int = STRIDE):
        self.rules = rules
        self.roster = roster
        self.n_stack = n_stack
        self.stride = stride
        self.history: deque = deque(maxlen=(n_stack - 1) * stride + 1)
        self.state: Optional[GameState] = None
        self.opponent_id: Optional[str] = None
        self.level = 1
        self.trace: Optional[list] = None

    @property
    def obs_dim(self) -> int:
        return self.n_stack * SNAPSHOT_DIM

    @property
    def terminal(self) -> bool:
        return self.state is not None and self.state.terminal

    def reset(self, seed: int, opponent_id: str, level: int) -> np.ndarray:
        self.roster.check(opponent_id, level)
        self.opponent_id = opponent_id
        self.level = level
        self.state = initial_state(self.rules, seed)
        self.history.clear()
        self.history.append(snapshot(self.state, self.rules))
        if self.trace is not None:
            self.trace.clear()
        return self.observe()

    def bot_command(self) -> ActionCommand:
        s = self.state
        return self.roster.act(self.opponent_id, self.level, s, s.rng, s.bot_memory)

    def step(self, command: ActionCommand) -> FrameEvents:
        """Advance one frame with p1 holding ``command``; the bot re-decides every frame."""
        bot_cmd = self.bot_command()
        events = advance(self.state, command, bot_cmd, self.rules)
        self.history.append(snapshot(self.state, self.rules))
        if self.trace is not None:
            self.trace.append((self.state.frame, command, bot_cmd, self.state.p1.x_pos, self.state.p1.hp,
                               self.state.p2.x_pos, self.state.p2.hp, events))
        return events

    def observe(self) -> np.ndarray:
        return observe(self.history, self.n_stack, self.stride)

    def start_trace(self) -> None:
        self.trace = []


TRACE_COLUMNS = ("frame", "p1_x", "p1_hp", "p2_x", "p2_hp", "p1_cmd", "p2_cmd", "events")


def format_events(ev: FrameEvents) -> str:
    return f"d1={ev.damage_dealt_p1};d2={ev.damage_dealt_p2};adv={int(ev.p1_advanced)};over={ev.round_over or ''}"


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for frame, c1, c2, x1, hp1, x2, hp2, ev in trace:
            w.writerow((frame, repr(x1), hp1, repr(x2), hp2, c1.flat, c2.flat, format_events(ev)))


