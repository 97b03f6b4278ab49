"""Checkpoint files: a one-line JSON manifest followed by little-endian float64 arrays."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .policy import Policy
from .ppo import Adam
from .skip import SkipStrategy, parse_strategy

MAGIC = b"SKIPFIGHT-CHECKPOINT 1\n"


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    policy: Policy
    strategy: SkipStrategy
    training_step: int = 0
    updates: int = 0
    optimizer: Optional[Adam] = None
    extra: dict = field(default_factory=dict)

    def manifest(self) -> dict:
        pol = self.policy
        arrays = [[k, list(v.shape)] for k, v in pol.params.items()]
        opt = None
        if self.optimizer is not None:
            opt = {"t": self.optimizer.t, "beta1": self.optimizer.beta1, "beta2": self.optimizer.beta2,
                   "eps": self.optimizer.eps}
            arrays += [[f"adam.m.{k}", list(v.shape)] for k, v in self.optimizer.m.items()]
            arrays += [[f"adam.v.{k}", list(v.shape)] for k, v in self.optimizer.v.items()]
        return {
            "layout": pol.layout,
            "n_skips": pol.n_skips,
            "n_actions": pol.n_actions,
            "obs_dim": pol.obs_dim,
            "hidden": list(pol.hidden),
            "strategy": str(self.strategy),
            "skip_set": list(self.strategy.values),
            "training_step": int(self.training_step),
            "updates": int(self.updates),
            "optimizer": opt,
            "extra": self.extra,
            "arrays": arrays,
        }

    def _arrays(self):
        yield from self.policy.params.values()
        if self.optimizer is not None:
            yield from self.optimizer.m.values()
            yield from self.optimizer.v.values()


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(ckpt.manifest(), sort_keys=True, separators=(",", ":")).encode() + b"\n"
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        for arr in ckpt._arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise CheckpointError(f"{path}: manifest line is not terminated")
    try:
        man = json.loads(data[len(MAGIC):end])
        strategy = parse_strategy(man["strategy"])
        ref = Policy.init(man["layout"], man["obs_dim"], man["n_skips"], tuple(man["hidden"]),
                          np.random.default_rng(0), n_actions=man["n_actions"])
        declared = [[str(k), [int(d) for d in shape]] for k, shape in man["arrays"]]
    except (json.JSONDecodeError, UnicodeDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt manifest ({exc!r})") from None
    if list(strategy.values) != man["skip_set"]:
        raise CheckpointError(f"{path}: skip_set {man['skip_set']} disagrees with strategy {man['strategy']}")
    expected = [[k, list(v.shape)] for k, v in ref.params.items()]
    n_param = len(expected)
    if declared[:n_param] != expected:
        raise CheckpointError(f"{path}: array shapes do not match a {man['layout']} policy")
    offset = end + 1
    arrays = {}
    for name, shape in declared:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(data):
            raise CheckpointError(f"{path}: truncated at array {name!r}")
        arrays[name] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise CheckpointError(f"{path}: {len(data) - offset} trailing bytes")
    ref.params = {k: arrays[k] for k, _ in expected}
    opt = None
    if man["optimizer"] is not None:
        o = man["optimizer"]
        try:
            opt = Adam(ref.params, o["beta1"], o["beta2"], o["eps"])
            opt.t = o["t"]
            opt.m = {k: arrays[f"adam.m.{k}"] for k in ref.params}
            opt.v = {k: arrays[f"adam.v.{k}"] for k in ref.params}
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: incomplete optimizer state ({exc!r})") from None
        if any(opt.m[k].shape != v.shape or opt.v[k].shape != v.shape for k, v in ref.params.items()):
            raise CheckpointError(f"{path}: optimizer moments do not match parameter shapes")
    return Checkpoint(ref, strategy, man["training_step"], man["updates"], opt, man.get("extra", {}))
