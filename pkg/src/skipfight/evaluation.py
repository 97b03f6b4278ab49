"""Post-training evaluation: greedy-with-epsilon play, win-rate intervals, matchup tables."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Optional

import numpy as np

from .agent import GREEDY, check_layout, decide
from .policy import Policy
from .sim import DEFAULT_ROSTER, P1, MicroFighterEnv, RewardConfig, Roster, Rules
from .sim.engine import DEFAULT_RULES
from .sim.moves import ActionCommand
from .skip import SkipStrategy, macro_step


def agresti_coull(x: int, n: int, z: float = 1.96, exact: bool = False) -> tuple[float, float]:
    """Return (x / n, half-width) of the Agresti-Coull interval.

    The default adds 2 successes and 4 trials; ``exact=True`` adds z^2/2 and z^2.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 <= x <= n:
        raise ValueError(f"successes {x} outside 0..{n}")
    if exact:
        n_t = n + z * z
        p_t = (x + z * z / 2) / n_t
    else:
        n_t = n + 4
        p_t = (x + 2) / n_t
    return x / n, z * math.sqrt(p_t * (1 - p_t) / n_t)


def percent_1dp(p: float) -> float:
    """Proportion as a one-decimal percentage, rounded half-up in two stages.

    Hundredths first, then tenths: 0.078492 -> 7.85 -> 7.9. Single-step
    rounding would give 7.8. Reported win-rate tables use this convention.
    """
    d = Decimal(repr(100.0 * p)).quantize(Decimal("0.01"), ROUND_HALF_UP)
    return float(d.quantize(Decimal("0.1"), ROUND_HALF_UP))


@dataclass
class EvalConfig:
    n_games: int = 100
    epsilon: float = 0.01
    z: float = 1.96
    levels: list = field(default_factory=lambda: list(range(1, 9)))
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.n_games < 1:
            raise ValueError("n_games must be >= 1")
        if not self.levels or any(not 1 <= int(lv) <= 8 for lv in self.levels):
            raise ValueError("levels must be a nonempty subset of 1..8")


@dataclass
class EvalReport:
    opponent: str
    wins: int
    losses: int
    ci_half_width: float
    episode_frames: list
    decisions: list
    actions: list = field(default_factory=list)  # per game: list of (action_idx, n_frames)

    @property
    def n_games(self) -> int:
        return self.wins + self.losses

    @property
    def win_rate(self) -> float:
        return self.wins / self.n_games


def play_game(env: MicroFighterEnv, policy: Policy, strategy: SkipStrategy, rng: np.random.Generator,
              epsilon: float, reward_cfg: Optional[RewardConfig] = None):
    """Play one round from the env's current reset state. Returns (winner, frames, decision log)."""
    reward_cfg = reward_cfg or RewardConfig()
    obs = env.observe()
    decisions = []
    while True:
        d = decide(policy, strategy, obs, rng, GREEDY, epsilon)
        a = int(d.action_idx[0])
        skip = d.skips[0]
        res = macro_step(env, ActionCommand.from_flat(a), skip, reward_cfg)
        decisions.append((a, skip.n_frames))
        if res.terminal:
            return res.winner, env.state.frame, decisions
        obs = res.obs


def evaluate(policy: Policy, strategy: SkipStrategy, opponent: str, cfg: EvalConfig,
             rules: Rules = DEFAULT_RULES, roster: Roster = DEFAULT_ROSTER) -> EvalReport:
    """Play ``cfg.n_games`` rounds; game g faces level ``cfg.levels[g % len(levels)]``.

    Draws count as losses.
    """
    check_layout(policy, strategy)
    roster.check(opponent, int(cfg.levels[0]))
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    env = MicroFighterEnv(rules, roster)
    wins = 0
    frames, n_dec, logs = [], [], []
    for g in range(cfg.n_games):
        env.reset(int(rng.integers(2 ** 31)), opponent, int(cfg.levels[g % len(cfg.levels)]))
        winner, f, dec = play_game(env, policy, strategy, rng, cfg.epsilon)
        wins += winner == P1
        frames.append(f)
        n_dec.append(len(dec))
        logs.append(dec)
    _, hw = agresti_coull(wins, cfg.n_games, cfg.z)
    return EvalReport(opponent, wins, cfg.n_games - wins, hw, frames, n_dec, logs)


MATCHUP_COLUMNS = ("strategy", "opponent", "level", "games", "wins", "win_rate", "ci_half_width")


def _level_label(levels) -> str:
    levels = [int(x) for x in levels]
    if len(levels) > 1 and levels == list(range(levels[0], levels[-1] + 1)):
        return f"{levels[0]}-{levels[-1]}"
    return ",".join(str(x) for x in levels)


def matchup_row(strategy: str, report: EvalReport, levels) -> list:
    return [strategy, report.opponent, _level_label(levels), report.n_games, report.wins,
            repr(report.win_rate), repr(report.ci_half_width)]


def cross_matchup_matrix(entries: list[tuple[str, Policy, SkipStrategy]], opponents: list[str],
                         cfg: EvalConfig, rules: Rules = DEFAULT_RULES, roster: Roster = DEFAULT_ROSTER):
    """Evaluate every (checkpoint, opponent) pair.

    ``entries`` holds (label, policy, strategy). Returns (win-rate matrix, reports by cell).
    """
    if not entries or not opponents:
        raise ValueError("cross_matchup_matrix needs nonempty checkpoint and opponent lists")
    matrix = np.zeros((len(entries), len(opponents)))
    reports = {}
    for i, (label, pol, strat) in enumerate(entries):
        for j, opp in enumerate(opponents):
            rep = evaluate(pol, strat, opp, cfg, rules, roster)
            matrix[i, j] = rep.win_rate
            reports[(label, opp)] = rep
    return matrix, reports


def write_matchup_csv(rows: list[list], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCHUP_COLUMNS)
        w.writerows(rows)
