"""Move tables and the flat action encoding for MicroFighter.

The agent's base action space is 8 motions x 6 attack slots (48 pairs)
followed by the special-move list, so the default flat action count is 52.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

MOTIONS = (
    "defense",
    "forward",
    "jump",
    "crouch",
    "back_flip",
    "front_flip",
    "offensive_crouch",
    "defensive_crouch",
)
ATTACKS = ("none", "light_punch", "medium_punch", "heavy_punch", "light_kick", "heavy_kick")
COMBOS = ("fireball", "uppercut", "hurricane", "sweep_super")

N_MOTIONS = len(MOTIONS)
N_ATTACKS = len(ATTACKS)
N_PAIRS = N_MOTIONS * N_ATTACKS
N_COMBOS = len(COMBOS)
N_ACTIONS = N_PAIRS + N_COMBOS

# Buttons reported by telemetry: every motion plus every real attack.
BUTTONS = MOTIONS + ATTACKS[1:]

(DEFENSE, FORWARD, JUMP, CROUCH, BACK_FLIP, FRONT_FLIP, OFF_CROUCH, DEF_CROUCH) = range(8)
CROUCHING_MOTIONS = frozenset((CROUCH, OFF_CROUCH, DEF_CROUCH))

HEIGHTS = ("mid", "low", "overhead")
MID, LOW, OVERHEAD = range(3)


@dataclass(frozen=True)
class MoveSpec:
    move_id: str
    kind: str  # "motion" | "attack" | "combo"
    startup_frames: int
    active_frames: int
    recovery_frames: int
    damage: int = 0
    reach: float = 0.0
    knockback: float = 0.0
    self_stun_on_whiff: int = 0
    hitstun: int = 0
    height: int = MID
    velocity: float = 0.0  # forward units per frame while the move runs
    airborne: bool = False

    @property
    def total_frames(self) -> int:
        return self.startup_frames + self.active_frames + self.recovery_frames

    def validate(self) -> None:
        frames = (self.startup_frames, self.active_frames, self.recovery_frames)
        if min(frames) < 0 or self.damage < 0 or self.self_stun_on_whiff < 0 or self.hitstun < 0:
            raise ValueError(f"move {self.move_id!r}: frame counts and damage must be >= 0")
        if self.total_frames < 1:
            raise ValueError(f"move {self.move_id!r}: needs at least one frame")
        if self.kind not in ("motion", "attack", "combo"):
            raise ValueError(f"move {self.move_id!r}: unknown kind {self.kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# startup, active, recovery, damage, reach, knockback, whiff stun, hitstun
_BASE_ATTACKS = {
    "light_punch": (3, 2, 7, 3, 12.0, 1.0, 0, 7),
    "medium_punch": (5, 3, 10, 6, 14.0, 2.0, 2, 10),
    "heavy_punch": (8, 3, 15, 9, 15.0, 4.0, 4, 14),
    "light_kick": (4, 2, 8, 4, 15.0, 1.0, 0, 8),
    "heavy_kick": (9, 4, 17, 10, 18.0, 5.0, 6, 15),
}


def _attack_variants() -> dict[str, MoveSpec]:
    out = {}
    for name, (su, ac, rc, dmg, reach, kb, whiff, hs) in _BASE_ATTACKS.items():
        out[f"stand_{name}"] = MoveSpec(f"stand_{name}", "attack", su, ac, rc, dmg, reach, kb, whiff, hs, MID)
        # forward + attack steps in while swinging
        out[f"lunge_{name}"] = MoveSpec(
            f"lunge_{name}", "attack", su, ac, rc, dmg, reach, kb, whiff, hs, MID, velocity=0.35
        )
        # crouching attacks hit low with a little less reach
        out[f"crouch_{name}"] = MoveSpec(
            f"crouch_{name}", "attack", su, ac, rc, dmg, reach - 2.0, kb, whiff, hs, LOW
        )
        # jumping attacks pay a rise delay and land as overheads
        for prefix, vel in (("air", 0.0), ("fair", 0.8), ("bair", -0.8)):
            out[f"{prefix}_{name}"] = MoveSpec(
                f"{prefix}_{name}", "attack", su + 6, ac, rc + 2, dmg + 1, reach, kb, whiff, hs, OVERHEAD,
                velocity=vel, airborne=True,
            )
    return out


def default_moves() -> dict[str, MoveSpec]:
    moves = {
        "jump": MoveSpec("jump", "motion", 0, 20, 0, airborne=True),
        "back_flip": MoveSpec("back_flip", "motion", 0, 22, 0, velocity=-1.2, airborne=True),
        "front_flip": MoveSpec("front_flip", "motion", 0, 22, 0, velocity=1.2, airborne=True),
    }
    moves.update(_attack_variants())
    moves["fireball"] = MoveSpec("fireball", "combo", 12, 4, 26, 15, 45.0, 6.0, 10, 16, MID)
    moves["uppercut"] = MoveSpec("uppercut", "combo", 4, 6, 32, 18, 12.0, 8.0, 20, 40, MID)
    moves["hurricane"] = MoveSpec("hurricane", "combo", 10, 12, 22, 16, 16.0, 6.0, 10, 16, MID, velocity=0.6)
    moves["sweep_super"] = MoveSpec("sweep_super", "combo", 14, 6, 28, 20, 20.0, 4.0, 16, 20, LOW)
    return moves


def check_move_table(moves: dict[str, MoveSpec]) -> None:
    """Raise ValueError if the table breaks the combo dominance rule."""
    for spec in moves.values():
        spec.validate()
    attacks = [m for m in moves.values() if m.kind == "attack"]
    combos = [m for m in moves.values() if m.kind == "combo"]
    if not attacks or len(combos) != N_COMBOS:
        raise ValueError(f"move table needs attacks and exactly {N_COMBOS} combos")
    max_dmg = max(m.damage for m in attacks)
    max_len = max(m.total_frames for m in attacks)
    for c in combos:
        if c.damage <= max_dmg or c.total_frames <= max_len:
            raise ValueError(
                f"combo {c.move_id!r} must out-damage ({max_dmg}) and outlast ({max_len}) every attack"
            )


_ATTACK_PREFIX = ("stand", "lunge", "air", "crouch", "bair", "fair", "crouch", "crouch")


def attack_move_id(motion_idx: int, attack_idx: int) -> str:
    return f"{_ATTACK_PREFIX[motion_idx]}_{ATTACKS[attack_idx]}"


@dataclass(frozen=True)
class ActionCommand:
    motion_idx: int = DEFENSE
    attack_idx: int = 0
    combo_idx: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.motion_idx < N_MOTIONS:
            raise ValueError(f"motion_idx {self.motion_idx} out of range")
        if not 0 <= self.attack_idx < N_ATTACKS:
            raise ValueError(f"attack_idx {self.attack_idx} out of range")
        if self.combo_idx is not None and not 0 <= self.combo_idx < N_COMBOS:
            raise ValueError(f"combo_idx {self.combo_idx} out of range")

    @property
    def flat(self) -> int:
        if self.combo_idx is not None:
            return N_PAIRS + self.combo_idx
        return self.motion_idx * N_ATTACKS + self.attack_idx

    @classmethod
    def from_flat(cls, idx: int) -> "ActionCommand":
        if not 0 <= idx < N_ACTIONS:
            raise ValueError(f"flat action index {idx} outside 0..{N_ACTIONS - 1}")
        return _FLAT[idx]

    def label(self) -> str:
        if self.combo_idx is not None:
            return COMBOS[self.combo_idx]
        if self.attack_idx == 0:
            return MOTIONS[self.motion_idx]
        return f"{MOTIONS[self.motion_idx]}+{ATTACKS[self.attack_idx]}"


_FLAT = tuple(
    [ActionCommand(m, a) for m in range(N_MOTIONS) for a in range(N_ATTACKS)]
    + [ActionCommand(combo_idx=c) for c in range(N_COMBOS)]
)


def cmd(motion: str = "defense", attack: str = "none") -> ActionCommand:
    return ActionCommand(MOTIONS.index(motion), ATTACKS.index(attack))


def combo(name: str) -> ActionCommand:
    return ActionCommand(combo_idx=COMBOS.index(name))


def buttons_of(flat_idx: int) -> tuple[int, ...]:
    """Indices into BUTTONS pressed by a non-combo action (empty for combos)."""
    if flat_idx >= N_PAIRS:
        return ()
    m, a = divmod(flat_idx, N_ATTACKS)
    return (m,) if a == 0 else (m, N_MOTIONS + a - 1)
