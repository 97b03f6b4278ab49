from .bots import DEFAULT_ROSTER, DIFFICULTY_ORDER, BotParams, Roster, UnknownOpponentError, scripted_bot_act
from .engine import (
    DEFAULT_RULES,
    DRAW,
    P1,
    P2,
    FighterState,
    FrameEvents,
    GameState,
    Rules,
    TerminalStateError,
    advance,
    initial_state,
    step_frame,
)
from .env import N_STACK, SNAPSHOT_DIM, STRIDE, MicroFighterEnv, observe, snapshot, write_trace_csv
from .moves import N_ACTIONS, N_COMBOS, N_PAIRS, ActionCommand, MoveSpec, cmd, combo
from .reward import RewardConfig, shaped_reward

__all__ = [
    "ActionCommand", "BotParams", "DEFAULT_ROSTER", "DEFAULT_RULES", "DIFFICULTY_ORDER", "DRAW",
    "FighterState", "FrameEvents", "GameState", "MicroFighterEnv", "MoveSpec", "N_ACTIONS",
    "N_COMBOS", "N_PAIRS", "N_STACK", "P1", "P2", "RewardConfig", "Roster", "Rules", "SNAPSHOT_DIM",
    "STRIDE", "TerminalStateError", "UnknownOpponentError", "advance", "cmd", "combo",
    "initial_state", "observe", "scripted_bot_act", "shaped_reward", "snapshot", "step_frame",
    "write_trace_csv",
]
