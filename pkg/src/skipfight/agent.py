"""Turn policy outputs into (action, frame-skip) decisions for a batch of environments."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .policy import Policy, argmax, decode_combined, log_softmax
from .skip import SkipChoice, SkipStrategy, choose_skip

SAMPLE, GREEDY = "sample", "greedy"


@dataclass
class Decision:
    action_idx: np.ndarray  # (B,)
    skip_idx: np.ndarray  # (B,) index into strategy.values
    skips: list[SkipChoice]
    log_prob: np.ndarray  # joint log-prob under the policy (0 contribution from non-learned skips)
    value: np.ndarray
    action_probs: np.ndarray  # (B, n_actions) marginal over game actions
    skip_probs: np.ndarray  # (B, n_skips) marginal over skip values


def check_layout(policy: Policy, strategy: SkipStrategy) -> None:
    if policy.layout != strategy.layout or (strategy.learned and policy.n_skips != strategy.n_skips):
        raise ValueError(
            f"policy layout {policy.layout!r} (skips={policy.n_skips}) does not match strategy "
            f"{strategy} (needs {strategy.layout!r}, skips={strategy.n_skips})"
        )


def _draw(logp: np.ndarray, greedy: bool, rng: np.random.Generator) -> int:
    if greedy:
        return int(argmax(logp))
    cdf = np.cumsum(np.exp(logp))
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(cdf) - 1)


def decide(policy: Policy, strategy: SkipStrategy, obs: np.ndarray, rng: np.random.Generator,
           mode: str = SAMPLE, epsilon: float = 0.0) -> Decision:
    """Choose one decision per observation row.

    ``mode="sample"`` samples every active head. ``mode="greedy"`` takes the
    argmax of every head, except that with probability ``epsilon`` a single
    Bernoulli draw per decision switches that whole decision to sampling.
    Non-learned skips come from the strategy and never read the policy.
    """
    fwd = policy.forward(np.atleast_2d(obs))
    b = fwd.value.shape[0]
    n_act = policy.n_actions
    actions = np.empty(b, dtype=np.int64)
    skip_idx = np.zeros(b, dtype=np.int64)
    logp = np.zeros(b)
    skips: list[SkipChoice] = []
    lay = policy.layout
    if lay == "combined":
        lp_c = log_softmax(fwd.logits["combined"])
        joint = np.exp(lp_c).reshape(b, n_act, policy.n_skips)
        action_probs, skip_probs = joint.sum(axis=2), joint.sum(axis=1)
    else:
        lp_a = log_softmax(fwd.logits["action"])
        action_probs = np.exp(lp_a)
        if lay == "separated":
            lp_s = log_softmax(fwd.logits["skip"])
            skip_probs = np.exp(lp_s)
        else:
            skip_probs = np.full((b, strategy.n_skips), 1.0 / strategy.n_skips)
    for i in range(b):
        greedy = mode == GREEDY and not (epsilon > 0.0 and rng.random() < epsilon)
        if lay == "combined":
            flat = _draw(lp_c[i], greedy, rng)
            a, s = decode_combined(flat, policy.n_skips, n_act)
            logp[i] = lp_c[i, flat]
            skip = SkipChoice(strategy.skip_set[s], s)
        else:
            a = _draw(lp_a[i], greedy, rng)
            logp[i] = lp_a[i, a]
            if lay == "separated":
                s = _draw(lp_s[i], greedy, rng)
                logp[i] += lp_s[i, s]
                skip = SkipChoice(strategy.skip_set[s], s)
            else:
                skip = choose_skip(strategy, None, rng)
                s = skip.set_index or 0
        actions[i], skip_idx[i] = a, s
        skips.append(skip)
    return Decision(actions, skip_idx, skips, logp, fwd.value, action_probs, skip_probs)


def selected_log_prob(policy: Policy, logits: dict, action_idx: np.ndarray, skip_idx: Optional[np.ndarray]):
    """Joint log-prob of stored choices; returns (joint, per-head log-softmax, per-head index)."""
    heads = {}
    if policy.layout == "combined":
        flat = action_idx * policy.n_skips + skip_idx
        heads["combined"] = (log_softmax(logits["combined"]), flat)
    else:
        heads["action"] = (log_softmax(logits["action"]), action_idx)
        if policy.layout == "separated":
            heads["skip"] = (log_softmax(logits["skip"]), skip_idx)
    rows = np.arange(action_idx.shape[0])
    joint = sum(lp[rows, idx] for lp, idx in heads.values())
    return joint, heads
