"""Run configuration files.

A run is described by one JSON document. Every section maps onto a dataclass
and unknown keys are rejected with the dotted path of the offending key, so a
typo never silently falls back to a default. ``dumps(loads(text))`` is a
canonical form: parsing it again gives an equal config.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .evaluation import EvalConfig
from .ppo import TrainConfig
from .sim import Roster, Rules
from .sim.bots import BotParams, DEFAULT_BOT_PARAMS
from .sim.moves import MoveSpec, default_moves
from .skip import parse_strategy

SCHEMA_VERSION = 1
FINETUNE_MODES = ("single", "sequential")


class ConfigError(ValueError):
    pass


def _check_keys(data: Any, allowed, where: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be an object, got {type(data).__name__}")
    for key in data:
        if key not in allowed:
            raise ConfigError(f"unknown key {where + '.' if where else ''}{key}")
    return data


def _build(cls, data: dict, where: str, **fixed):
    names = {f.name for f in fields(cls)} - set(fixed)
    _check_keys(data, names, where)
    try:
        return cls(**data, **fixed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _section(obj, exclude=()) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj) if f.name not in exclude}


@dataclass
class SimConfig:
    """Overrides for the simulator: rule scalars, bot parameters and move specs."""

    rules: dict = field(default_factory=dict)
    bots: dict = field(default_factory=dict)
    moves: dict = field(default_factory=dict)

    def build_rules(self) -> Rules:
        rule_names = {f.name for f in fields(Rules)} - {"moves"}
        _check_keys(self.rules, rule_names, "sim.rules")
        moves = default_moves()
        spec_names = {f.name for f in fields(MoveSpec)} - {"move_id"}
        for move_id, over in self.moves.items():
            _check_keys(over, spec_names, f"sim.moves.{move_id}")
            if move_id in moves:
                moves[move_id] = replace(moves[move_id], **over)
            else:
                try:
                    moves[move_id] = MoveSpec(move_id=move_id, **over)
                except TypeError as exc:
                    raise ConfigError(f"sim.moves.{move_id}: {exc}") from None
        try:
            return Rules(**self.rules, moves=moves)
        except ValueError as exc:
            raise ConfigError(f"sim: {exc}") from None

    def build_roster(self) -> Roster:
        params = dict(DEFAULT_BOT_PARAMS)
        scripts = {}
        names = {f.name for f in fields(BotParams)}
        for bot, over in self.bots.items():
            over = dict(_check_keys(over, names | {"base"}, f"sim.bots.{bot}"))
            base = over.pop("base", None)
            if base is None and bot not in DEFAULT_BOT_PARAMS:
                raise ConfigError(f"unknown key sim.bots.{bot} (new variants need a base bot)")
            if base is not None:
                if base not in DEFAULT_BOT_PARAMS:
                    raise ConfigError(f"sim.bots.{bot}.base: unknown bot {base!r}")
                scripts[bot] = base
            params[bot] = replace(DEFAULT_BOT_PARAMS[base or bot], **over)
        return Roster(params, scripts)


@dataclass
class EvalSection:
    config: EvalConfig = field(default_factory=EvalConfig)
    opponents: list = field(default_factory=lambda: ["pulse_bot"])


@dataclass
class FinetuneSection:
    mode: str = "single"
    opponents: list = field(default_factory=lambda: ["turtle_bot"])
    budget_fraction: float = 0.2

    def __post_init__(self):
        if self.mode not in FINETUNE_MODES:
            raise ValueError(f"mode must be one of {FINETUNE_MODES}, got {self.mode!r}")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ValueError("budget_fraction must be in (0, 1]")
        if not self.opponents:
            raise ValueError("opponents must not be empty")


@dataclass
class TraceSection:
    opponent: str = "pulse_bot"
    level: int = 1
    # drives p1 when no checkpoint is given
    p1_bot: str = "random_bot"
    p1_level: int = 1


@dataclass
class RunConfig:
    run_name: str = "run"
    out_dir: str = "runs"
    seed: int = 0
    checkpoint_every: int = 10  # updates between checkpoints
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSection = field(default_factory=EvalSection)
    finetune: FinetuneSection = field(default_factory=FinetuneSection)
    trace: TraceSection = field(default_factory=TraceSection)
    sim: SimConfig = field(default_factory=SimConfig)
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        # the run seed is the single source of truth
        if self.train.seed != self.seed:
            self.train = replace(self.train, seed=self.seed)
        if self.eval.config.seed != self.seed:
            self.eval.config = replace(self.eval.config, seed=self.seed)
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed)

    @property
    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_name

    def to_dict(self) -> dict:
        ev = _section(self.eval.config, exclude=("seed",))
        ev["opponents"] = list(self.eval.opponents)
        return {
            "schema_version": self.schema_version,
            "run_name": self.run_name,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "checkpoint_every": self.checkpoint_every,
            "train": _section(self.train, exclude=("seed",)),
            "eval": ev,
            "finetune": _section(self.finetune),
            "trace": _section(self.trace),
            "sim": _section(self.sim),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        top = {"schema_version", "run_name", "out_dir", "seed", "checkpoint_every",
               "train", "eval", "finetune", "trace", "sim"}
        _check_keys(data, top, "")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
        seed = data.get("seed", 0)
        train = _build(TrainConfig, data.get("train", {}), "train", seed=seed)
        try:
            parse_strategy(train.strategy)
        except ValueError as exc:
            raise ConfigError(f"train.strategy: {exc}") from None
        ev_data = dict(_check_keys(data.get("eval", {}),
                                   {f.name for f in fields(EvalConfig)} - {"seed"} | {"opponents"}, "eval"))
        opponents = ev_data.pop("opponents", ["pulse_bot"])
        ev = EvalSection(_build(EvalConfig, ev_data, "eval", seed=seed), list(opponents))
        sim = _build(SimConfig, data.get("sim", {}), "sim")
        try:
            cfg = cls(
                run_name=data.get("run_name", "run"),
                out_dir=data.get("out_dir", "runs"),
                seed=seed,
                checkpoint_every=data.get("checkpoint_every", 10),
                train=train,
                eval=ev,
                finetune=_build(FinetuneSection, data.get("finetune", {}), "finetune"),
                trace=_build(TraceSection, data.get("trace", {}), "trace"),
                sim=sim,
                schema_version=version,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        # surface bad sim overrides at parse time rather than mid-run
        roster = sim.build_roster()
        sim.build_rules()
        for name in [*train.opponents, *ev.opponents, *cfg.finetune.opponents,
                     cfg.trace.opponent, cfg.trace.p1_bot]:
            try:
                roster.check(name, 1)
            except KeyError as exc:
                raise ConfigError(exc.args[0]) from None
        return cfg


def loads(text: str) -> RunConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return RunConfig.from_dict(data)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return loads(path.read_text())


def save_config(cfg: RunConfig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(cfg))


@dataclass
class SweepSpec:
    strategies: list
    base: RunConfig
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.strategies:
            raise ConfigError("sweep needs at least one strategy")
        if len(set(self.strategies)) != len(self.strategies):
            raise ConfigError("sweep strategies must be distinct")
        for s in self.strategies:
            try:
                parse_strategy(s)
            except ValueError as exc:
                raise ConfigError(f"strategies: {exc}") from None

    def run_config(self, strategy: str) -> RunConfig:
        slug = strategy.replace(":", "-").replace(",", "_")
        return replace(self.base, run_name=f"{self.base.run_name}/{slug}",
                       train=replace(self.base.train, strategy=strategy))

    def to_dict(self) -> dict:
        return {"schema_version": self.schema_version, "strategies": list(self.strategies),
                "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "SweepSpec":
        _check_keys(data, {"schema_version", "strategies", "base"}, "")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version {version!r} is not supported (expected {SCHEMA_VERSION})")
        if "strategies" not in data:
            raise ConfigError("sweep file lacks key strategies")
        return cls(list(data["strategies"]), RunConfig.from_dict(data.get("base", {})), version)


def load_sweep(path) -> SweepSpec:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"sweep file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return SweepSpec.from_dict(data)

