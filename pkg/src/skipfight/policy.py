"""Dense actor-critic with categorical heads and hand-written reverse mode.

Three head layouts are supported:

* ``action``    - one head over the 52 game actions (fixed / random skips)
* ``separated`` - an action head plus an independent frame-skip head
* ``combined``  - one head over every (action, skip) pair

All heads read the same tanh trunk. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .sim.moves import N_ACTIONS

LAYOUTS = ("action", "separated", "combined")


def head_sizes(layout: str, n_skips: int, n_actions: int = N_ACTIONS) -> dict[str, int]:
    if layout == "action":
        return {"action": n_actions}
    if layout == "separated":
        return {"action": n_actions, "skip": n_skips}
    if layout == "combined":
        return {"combined": n_actions * n_skips}
    raise ValueError(f"unknown layout {layout!r}")


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


@dataclass
class Policy:
    layout: str
    n_skips: int
    obs_dim: int
    hidden: tuple[int, ...]
    params: dict[str, np.ndarray] = field(default_factory=dict)
    n_actions: int = N_ACTIONS

    @classmethod
    def init(cls, layout: str, obs_dim: int, n_skips: int = 1, hidden=(128, 128),
             rng: Optional[np.random.Generator] = None, n_actions: int = N_ACTIONS) -> "Policy":
        if layout not in LAYOUTS:
            raise ValueError(f"unknown layout {layout!r}")
        if layout != "action" and n_skips < 1:
            raise ValueError("learned layouts need at least one skip value")
        rng = rng if rng is not None else np.random.default_rng(0)
        pol = cls(layout, n_skips if layout != "action" else 1, obs_dim, tuple(hidden), n_actions=n_actions)
        width = obs_dim
        for i, h in enumerate(pol.hidden):
            pol.params[f"trunk.{i}.W"] = orthogonal(rng, (width, h), 1.0)
            pol.params[f"trunk.{i}.b"] = np.zeros(h)
            width = h
        for name, k in head_sizes(layout, n_skips, n_actions).items():
            pol.params[f"head.{name}.W"] = orthogonal(rng, (width, k), 0.01)
            pol.params[f"head.{name}.b"] = np.zeros(k)
        pol.params["head.value.W"] = orthogonal(rng, (width, 1), 1.0)
        pol.params["head.value.b"] = np.zeros(1)
        return pol

    @property
    def heads(self) -> tuple[str, ...]:
        return tuple(head_sizes(self.layout, self.n_skips, self.n_actions))

    def copy(self) -> "Policy":
        return Policy(self.layout, self.n_skips, self.obs_dim, self.hidden,
                      {k: v.copy() for k, v in self.params.items()}, self.n_actions)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, obs: np.ndarray) -> "Forward":
        x = np.asarray(obs, dtype=np.float64)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[1] != self.obs_dim:
            raise ValueError(f"observation width {x.shape[1]} != trunk input width {self.obs_dim}")
        acts = [x]
        for i in range(len(self.hidden)):
            x = np.tanh(x @ self.params[f"trunk.{i}.W"] + self.params[f"trunk.{i}.b"])
            acts.append(x)
        logits = {name: x @ self.params[f"head.{name}.W"] + self.params[f"head.{name}.b"] for name in self.heads}
        value = (x @ self.params["head.value.W"] + self.params["head.value.b"])[:, 0]
        return Forward(acts, logits, value, single)

    def backward(self, fwd: "Forward", grad_logits: dict[str, np.ndarray], grad_value: np.ndarray) -> dict[str, np.ndarray]:
        """Reverse-mode gradients of a scalar loss given its derivatives w.r.t. the head outputs."""
        p = self.params
        grads: dict[str, np.ndarray] = {}
        top = fwd.activations[-1]
        gv = np.asarray(grad_value, dtype=np.float64).reshape(-1, 1)
        grads["head.value.W"] = top.T @ gv
        grads["head.value.b"] = gv.sum(axis=0)
        dh = gv @ p["head.value.W"].T
        for name in self.heads:
            g = grad_logits.get(name)
            if g is None:
                grads[f"head.{name}.W"] = np.zeros_like(p[f"head.{name}.W"])
                grads[f"head.{name}.b"] = np.zeros_like(p[f"head.{name}.b"])
                continue
            grads[f"head.{name}.W"] = top.T @ g
            grads[f"head.{name}.b"] = g.sum(axis=0)
            dh = dh + g @ p[f"head.{name}.W"].T
        for i in reversed(range(len(self.hidden))):
            h = fwd.activations[i + 1]
            dz = dh * (1.0 - h * h)
            grads[f"trunk.{i}.W"] = fwd.activations[i].T @ dz
            grads[f"trunk.{i}.b"] = dz.sum(axis=0)
            if i:
                dh = dz @ p[f"trunk.{i}.W"].T
        return {k: grads[k] for k in p}


@dataclass
class Forward:
    activations: list
    logits: dict[str, np.ndarray]
    value: np.ndarray
    single: bool = False

    def head(self, name: str) -> np.ndarray:
        out = self.logits[name]
        return out[0] if self.single else out


# -- categorical machinery ---------------------------------------------------

def _check_logits(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise ValueError("logits must be finite")
    return logits


def logsumexp(logits: np.ndarray) -> np.ndarray:
    m = np.max(logits, axis=-1, keepdims=True)
    return (m + np.log(np.sum(np.exp(logits - m), axis=-1, keepdims=True)))[..., 0]


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = _check_logits(logits)
    return logits - logsumexp(logits)[..., None]


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def log_prob(logits: np.ndarray, index) -> np.ndarray:
    """Log-probability of ``index`` under a categorical with ``logits`` (batched on the last axis)."""
    logp = log_softmax(logits)
    k = logp.shape[-1]
    idx = np.asarray(index)
    if np.any(idx < 0) or np.any(idx >= k):
        raise IndexError(f"category index out of range 0..{k - 1}")
    if logp.ndim == 1:
        return logp[int(idx)]
    return np.take_along_axis(logp, idx.reshape(-1, 1).astype(np.int64), axis=-1)[:, 0]


def entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -np.sum(np.exp(logp) * logp, axis=-1)


def sample(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw; one uniform per row, rows consumed in order."""
    p = softmax(logits)
    if p.ndim == 1:
        return int(_pick(np.cumsum(p), rng.random()))
    u = rng.random(p.shape[0])
    cdf = np.cumsum(p, axis=-1)
    return np.array([_pick(c, ui) for c, ui in zip(cdf, u)], dtype=np.int64)


def _pick(cdf: np.ndarray, u: float) -> int:
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


def argmax(logits: np.ndarray) -> np.ndarray:
    """Greedy choice; ties go to the lowest index."""
    return np.argmax(np.asarray(logits), axis=-1)


def joint_log_prob_separated(action_lp, skip_lp):
    return action_lp + skip_lp


def joint_entropy_separated(h_action, h_skip):
    return h_action + h_skip


def encode_combined(action_idx, skip_idx, n_skips: int, n_actions: int = N_ACTIONS):
    a, s = np.asarray(action_idx), np.asarray(skip_idx)
    if np.any(a < 0) or np.any(a >= n_actions) or np.any(s < 0) or np.any(s >= n_skips):
        raise IndexError("combined index component out of range")
    out = a * n_skips + s
    return int(out) if out.ndim == 0 else out


def decode_combined(flat_idx, n_skips: int, n_actions: int = N_ACTIONS):
    f = np.asarray(flat_idx)
    if np.any(f < 0) or np.any(f >= n_actions * n_skips):
        raise IndexError("combined index out of range")
    a, s = np.divmod(f, n_skips)
    if f.ndim == 0:
        return int(a), int(s)
    return a, s


def combined_from_separated(action_logits: np.ndarray, skip_logits: np.ndarray) -> np.ndarray:
    """Outer sum: combined logit for (a, s) is action_logits[a] + skip_logits[s]."""
    a = np.asarray(action_logits)[..., :, None]
    s = np.asarray(skip_logits)[..., None, :]
    out = a + s
    return out.reshape(out.shape[:-2] + (-1,))
