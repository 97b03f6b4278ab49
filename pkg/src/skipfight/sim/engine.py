"""Frame rules for MicroFighter: state types and the single-frame step."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .moves import (
    ATTACKS,
    BACK_FLIP,
    COMBOS,
    CROUCHING_MOTIONS,
    DEF_CROUCH,
    DEFENSE,
    FORWARD,
    FRONT_FLIP,
    JUMP,
    LOW,
    MID,
    MOTIONS,
    OFF_CROUCH,
    ActionCommand,
    MoveSpec,
    attack_move_id,
    check_move_table,
    default_moves,
)

STARTUP, ACTIVE, RECOVERY = 0, 1, 2
PHASES = ("startup", "active", "recovery")

P1, P2, DRAW = "p1", "p2", "draw"


class TerminalStateError(RuntimeError):
    pass


@dataclass
class Rules:
    arena_width: float = 100.0
    max_hp: int = 100
    round_time_limit: int = 99 * 60
    start_offset: float = 15.0  # distance of each fighter from the arena centre
    walk_speed: float = 0.5
    crouch_walk_speed: float = 0.25
    min_gap: float = 6.0
    guard_stun: int = 2
    moves: dict[str, MoveSpec] = field(default_factory=default_moves)

    def __post_init__(self):
        for name in ("arena_width", "max_hp", "round_time_limit", "walk_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.min_gap < self.arena_width or self.crouch_walk_speed < 0 or self.guard_stun < 0:
            raise ValueError("min_gap, crouch_walk_speed and guard_stun must be non-negative")
        if not 0 < self.start_offset < self.arena_width / 2:
            raise ValueError(f"start_offset must lie in (0, arena_width / 2), got {self.start_offset}")
        check_move_table(self.moves)
        for name in ("jump", "back_flip", "front_flip"):
            if name not in self.moves:
                raise ValueError(f"move table lacks motion move {name!r}")
        self._motion_moves = {
            JUMP: self.moves["jump"],
            BACK_FLIP: self.moves["back_flip"],
            FRONT_FLIP: self.moves["front_flip"],
        }
        self._attack_moves = {
            (m, a): self.moves[attack_move_id(m, a)]
            for m in range(len(MOTIONS))
            for a in range(1, len(ATTACKS))
        }
        self._combo_moves = tuple(self.moves[c] for c in COMBOS)

    def move_for(self, command: ActionCommand) -> Optional[MoveSpec]:
        """The move a free fighter starts for ``command`` (None for ground motions)."""
        if command.combo_idx is not None:
            return self._combo_moves[command.combo_idx]
        if command.attack_idx:
            return self._attack_moves[(command.motion_idx, command.attack_idx)]
        return self._motion_moves.get(command.motion_idx)


@dataclass(slots=True)
class FighterState:
    x_pos: float
    hp: int
    facing: int  # +1 faces right, -1 faces left
    move: Optional[MoveSpec] = None
    phase: int = STARTUP
    frames_remaining: int = 0
    move_elapsed: int = 0
    connected: bool = False
    stun_frames: int = 0
    guard: bool = False
    guard_low: bool = False
    crouching: bool = False

    @property
    def airborne(self) -> bool:
        return self.move is not None and self.move.airborne

    @property
    def facing_name(self) -> str:
        return "right" if self.facing > 0 else "left"

    @property
    def move_in_progress(self) -> Optional[tuple[str, str, int]]:
        if self.move is None:
            return None
        return (self.move.move_id, PHASES[self.phase], self.frames_remaining)

    def key(self) -> tuple:
        return (
            self.x_pos, self.hp, self.facing, self.move_in_progress, self.move_elapsed,
            self.connected, self.stun_frames, self.guard, self.guard_low, self.crouching,
        )

    def start(self, spec: MoveSpec) -> None:
        self.move = spec
        self.move_elapsed = 0
        self.connected = False
        self.crouching = spec.height == LOW and spec.kind == "attack"
        self.phase = STARTUP
        self.frames_remaining = spec.startup_frames
        self._skip_empty_phases()

    def _skip_empty_phases(self) -> None:
        spec = self.move
        while self.frames_remaining == 0:
            if self.phase == STARTUP:
                self.phase, self.frames_remaining = ACTIVE, spec.active_frames
            elif self.phase == ACTIVE:
                extra = 0 if self.connected or spec.kind == "motion" else spec.self_stun_on_whiff
                self.phase, self.frames_remaining = RECOVERY, spec.recovery_frames + extra
            else:
                self.move = None
                self.crouching = False
                return

    def tick_move(self) -> None:
        if self.move is None:
            return
        self.move_elapsed += 1
        self.frames_remaining -= 1
        self._skip_empty_phases()


@dataclass
class FrameEvents:
    damage_dealt_p1: int = 0
    damage_dealt_p2: int = 0
    p1_advanced: bool = False
    round_over: Optional[str] = None  # "p1", "p2" or "draw"


@dataclass
class GameState:
    p1: FighterState
    p2: FighterState
    frame: int
    round_time_limit: int
    rng: np.random.Generator
    bot_memory: dict = field(default_factory=dict)
    arena_width: float = 100.0

    @property
    def rng_state(self) -> dict:
        return self.rng.bit_generator.state

    @property
    def terminal(self) -> bool:
        return self.p1.hp == 0 or self.p2.hp == 0 or self.frame >= self.round_time_limit

    def winner(self) -> Optional[str]:
        if not self.terminal:
            return None
        if self.p1.hp == self.p2.hp:
            return DRAW
        return P1 if self.p1.hp > self.p2.hp else P2

    def key(self) -> tuple:
        """Everything except the generator, as a comparable tuple."""
        return (self.p1.key(), self.p2.key(), self.frame, self.round_time_limit,
                tuple(sorted(self.bot_memory.items())), self.arena_width)

    def copy(self) -> "GameState":
        return copy.deepcopy(self)


def initial_state(rules: Rules, seed: int) -> GameState:
    centre = rules.arena_width / 2
    return GameState(
        p1=FighterState(centre - rules.start_offset, rules.max_hp, 1),
        p2=FighterState(centre + rules.start_offset, rules.max_hp, -1),
        frame=0,
        round_time_limit=rules.round_time_limit,
        rng=np.random.Generator(np.random.PCG64(seed)),
        arena_width=rules.arena_width,
    )


def _act(f: FighterState, command: ActionCommand, rules: Rules) -> float:
    """Apply one frame of input to ``f``; return its intended velocity (facing-relative)."""
    f.guard = False
    f.guard_low = False
    if f.stun_frames > 0:
        f.stun_frames -= 1
        return 0.0
    if f.move is None:
        spec = rules.move_for(command)
        if spec is not None:
            f.start(spec)
        else:
            m = command.motion_idx
            f.crouching = m in CROUCHING_MOTIONS
            if m == DEFENSE:
                f.guard = True
            elif m == DEF_CROUCH:
                f.guard = True
                f.guard_low = True
            elif m == FORWARD:
                return rules.walk_speed
            elif m == OFF_CROUCH:
                return rules.crouch_walk_speed
            return 0.0
    return f.move.velocity if f.move is not None else 0.0


def _separate(a: FighterState, b: FighterState, rules: Rules) -> None:
    """Clamp both fighters into the arena and keep them ``min_gap`` apart, sides fixed."""
    w = rules.arena_width
    left, right = (a, b) if a.facing > 0 else (b, a)
    left.x_pos = min(max(left.x_pos, 0.0), w)
    right.x_pos = min(max(right.x_pos, 0.0), w)
    overlap = rules.min_gap - (right.x_pos - left.x_pos)
    if overlap > 0:
        left.x_pos -= overlap / 2
        right.x_pos += overlap / 2
        if left.x_pos < 0.0:
            right.x_pos -= left.x_pos
            left.x_pos = 0.0
        elif right.x_pos > w:
            left.x_pos -= right.x_pos - w
            right.x_pos = w


def _push(dfn: FighterState, att: FighterState, push: float, width: float) -> None:
    """Knock ``dfn`` away from ``att``; whatever the wall absorbs moves the attacker back instead."""
    target = dfn.x_pos - push * dfn.facing
    clamped = min(max(target, 0.0), width)
    dfn.x_pos = clamped
    att.x_pos -= abs(target - clamped) * att.facing


def _resolve(att: FighterState, dfn: FighterState, dist: float, rules: Rules):
    """Return (damage, stun, push) inflicted on ``dfn`` by ``att`` this frame, or None."""
    spec = att.move
    if spec is None or att.phase != ACTIVE or att.connected or spec.kind == "motion":
        return None
    if dist > spec.reach:
        return None
    if spec.height == LOW and dfn.airborne:
        return None
    att.connected = True
    if dfn.guard and (spec.height == MID or dfn.guard_low == (spec.height == LOW)):
        return (0, rules.guard_stun, spec.knockback)
    return (spec.damage, spec.hitstun, spec.knockback)


def advance(state: GameState, p1_cmd: ActionCommand, p2_cmd: ActionCommand, rules: Rules) -> FrameEvents:
    """Step ``state`` forward one frame in place."""
    if state.terminal:
        raise TerminalStateError(f"cannot step terminal state at frame {state.frame}")
    p1, p2 = state.p1, state.p2
    gap_before = abs(p2.x_pos - p1.x_pos)
    x1_before = p1.x_pos

    v1 = _act(p1, p1_cmd, rules)
    v2 = _act(p2, p2_cmd, rules)
    p1.x_pos += v1 * p1.facing
    p2.x_pos += v2 * p2.facing
    _separate(p1, p2, rules)

    dist = abs(p2.x_pos - p1.x_pos)
    hit_on_p2 = _resolve(p1, p2, dist, rules)
    hit_on_p1 = _resolve(p2, p1, dist, rules)
    events = FrameEvents()
    for dfn, att, hit in ((p2, p1, hit_on_p2), (p1, p2, hit_on_p1)):
        if hit is None:
            continue
        dmg, stun, push = hit
        if dmg:
            dealt = min(dmg, dfn.hp)
            dfn.hp -= dealt
            dfn.move = None
            dfn.crouching = False
            if dfn is p2:
                events.damage_dealt_p1 = dealt
            else:
                events.damage_dealt_p2 = dealt
        dfn.stun_frames = max(dfn.stun_frames, stun)
        _push(dfn, att, push, rules.arena_width)
    _separate(p1, p2, rules)

    p1.tick_move()
    p2.tick_move()
    p1.facing = 1 if p2.x_pos >= p1.x_pos else -1
    p2.facing = -p1.facing
    state.frame += 1

    events.p1_advanced = abs(p2.x_pos - p1.x_pos) < gap_before and (p1.x_pos - x1_before) * p1.facing > 0
    if state.terminal:
        events.round_over = state.winner()
    return events


def step_frame(
    state: GameState, p1_cmd: ActionCommand, p2_cmd: ActionCommand, rules: Optional[Rules] = None
) -> tuple[GameState, FrameEvents]:
    """Pure variant of :func:`advance`: the input state is left untouched."""
    new = state.copy()
    events = advance(new, p1_cmd, p2_cmd, rules or DEFAULT_RULES)
    return new, events


DEFAULT_RULES = Rules()
