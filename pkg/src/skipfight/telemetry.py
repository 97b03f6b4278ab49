"""Per-episode policy-distribution telemetry and its CSV form."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .sim.moves import BUTTONS, COMBOS, N_PAIRS, buttons_of
from .skip import SkipStrategy

# (n_actions, n_buttons) incidence: an action adds its probability to every button it presses
BUTTON_MATRIX = np.zeros((N_PAIRS + len(COMBOS), len(BUTTONS)))
for _a in range(N_PAIRS):
    for _b in buttons_of(_a):
        BUTTON_MATRIX[_a, _b] = 1.0


@dataclass
class EpisodeTrace:
    """Per-decision head distributions for one episode, plus its totals."""

    action_probs: list = field(default_factory=list)
    skip_probs: list = field(default_factory=list)
    reward: float = 0.0
    frames: int = 0

    def add(self, action_probs: np.ndarray, skip_probs: np.ndarray) -> None:
        self.action_probs.append(action_probs)
        self.skip_probs.append(skip_probs)

    def __len__(self) -> int:
        return len(self.action_probs)


@dataclass
class TelemetryRow:
    episode: int
    ep_reward: float
    ep_frames: int
    skip_values: tuple
    skip_p: np.ndarray
    button_p: np.ndarray
    combo_p: np.ndarray

    @property
    def groups(self) -> tuple:
        return self.skip_p, self.button_p, self.combo_p


def button_marginals(action_probs: np.ndarray) -> np.ndarray:
    """Share of button presses per button; combos press no single button."""
    presses = action_probs @ BUTTON_MATRIX
    return presses / presses.sum(axis=-1, keepdims=True)


def combo_marginals(action_probs: np.ndarray) -> np.ndarray:
    """Distribution over the special moves, conditional on choosing one."""
    c = action_probs[..., N_PAIRS:]
    return c / c.sum(axis=-1, keepdims=True)


def distribution_telemetry(trace: EpisodeTrace, strategy: SkipStrategy, episode: int = 0) -> TelemetryRow:
    if len(trace) == 0:
        raise ValueError("empty episode trace")
    actions = np.mean(np.stack(trace.action_probs), axis=0)
    skips = np.mean(np.stack(trace.skip_probs), axis=0)
    return TelemetryRow(episode, float(trace.reward), int(trace.frames), tuple(strategy.values),
                        skips, button_marginals(actions), combo_marginals(actions))


def telemetry_header(skip_values) -> list[str]:
    return (["episode", "ep_reward", "ep_frames"]
            + [f"skip_p_{v}" for v in skip_values]
            + [f"button_p_{b}" for b in BUTTONS]
            + [f"combo_p_{c}" for c in COMBOS])


def write_telemetry_csv(rows: list[TelemetryRow], path, skip_values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(telemetry_header(skip_values))
        for r in rows:
            w.writerow([r.episode, repr(r.ep_reward), r.ep_frames]
                       + [repr(float(x)) for x in np.concatenate(r.groups)])


def read_telemetry_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]
