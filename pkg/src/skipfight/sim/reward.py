"""Shaped reward: damage exchange, forward pressure and the round outcome."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .engine import P1, P2, FrameEvents


@dataclass(frozen=True)
class RewardConfig:
    dense_coef: float = 3.0
    aggressive_coef: float = 1.0
    win_bonus: float = 1.0
    lose_penalty: float = 1.0

    def __post_init__(self):
        for name in ("dense_coef", "aggressive_coef", "win_bonus", "lose_penalty"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


def shaped_reward(
    events: FrameEvents,
    cfg: RewardConfig,
    terminal_outcome: Optional[str] = None,
    max_hp: int = 100,
    round_time_limit: int = 5940,
) -> float:
    """Per-frame reward from p1's point of view.

    ``terminal_outcome`` is "p1", "p2" or "draw" on the frame the round ends.
    A draw earns neither the bonus nor the penalty.
    """
    r = cfg.dense_coef * (events.damage_dealt_p1 - events.damage_dealt_p2) / max_hp
    if events.p1_advanced:
        r += cfg.aggressive_coef / round_time_limit
    if terminal_outcome == P1:
        r += cfg.win_bonus
    elif terminal_outcome == P2:
        r -= cfg.lose_penalty
    return r
