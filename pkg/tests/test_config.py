import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skipfight.config import (
    ConfigError,
    RunConfig,
    SweepSpec,
    dumps,
    load_config,
    load_sweep,
    loads,
    save_config,
)

STRATEGIES = ["fixed:4", "fixed:8", "fixed:16", "fixed:60", "random:4-8", "random:4-16",
              "separated:4-8", "separated:4-16", "separated:4-16,32", "combined:4-8"]


def test_defaults_round_trip():
    cfg = RunConfig()
    assert loads(dumps(cfg)) == cfg
    assert dumps(loads(dumps(cfg))) == dumps(cfg)


@settings(max_examples=30, deadline=None)
@given(
    strategy=st.sampled_from(STRATEGIES),
    seed=st.integers(0, 2 ** 31),
    steps=st.integers(1, 10 ** 7),
    n_games=st.integers(1, 500),
    eps=st.floats(0.0, 1.0),
    mode=st.sampled_from(["single", "sequential"]),
)
def test_round_trip_identity(strategy, seed, steps, n_games, eps, mode):
    cfg = RunConfig.from_dict({
        "seed": seed,
        "train": {"strategy": strategy, "total_steps": steps},
        "eval": {"n_games": n_games, "epsilon": eps, "opponents": ["rush_bot", "zoner_bot"]},
        "finetune": {"mode": mode},
    })
    text = dumps(cfg)
    back = loads(text)
    assert back == cfg
    assert dumps(back) == text
    assert back.train.seed == back.eval.config.seed == seed


def test_file_round_trip(tmp_path):
    cfg = RunConfig.from_dict({"run_name": "r", "train": {"strategy": "separated:4-16", "hidden": [32]}})
    save_config(cfg, tmp_path / "nested" / "c.json")
    assert load_config(tmp_path / "nested" / "c.json") == cfg


@pytest.mark.parametrize("data,key", [
    ({"trian": {}}, "trian"),
    ({"train": {"lr": 0.1}}, "train.lr"),
    ({"eval": {"games": 3}}, "eval.games"),
    ({"finetune": {"modes": "single"}}, "finetune.modes"),
    ({"sim": {"rules": {"gravity": 1.0}}}, "sim.rules.gravity"),
    ({"sim": {"bots": {"pulse_bot": {"speed": 2}}}}, "sim.bots.pulse_bot.speed"),
    ({"sim": {"moves": {"uppercut": {"dmg": 2}}}}, "sim.moves.uppercut.dmg"),
])
def test_unknown_keys_are_named(data, key):
    with pytest.raises(ConfigError, match=f"unknown key {key}"):
        RunConfig.from_dict(data)


def test_seed_lives_at_top_level_only():
    with pytest.raises(ConfigError, match="train.seed"):
        RunConfig.from_dict({"train": {"seed": 3}})
    with pytest.raises(ConfigError, match="eval.seed"):
        RunConfig.from_dict({"eval": {"seed": 3}})


def test_schema_version():
    assert json.loads(dumps(RunConfig()))["schema_version"] == 1
    with pytest.raises(ConfigError, match="schema_version"):
        RunConfig.from_dict({"schema_version": 2})


@pytest.mark.parametrize("data,fragment", [
    ({"train": {"batch_size": 1000}}, "batch_size"),
    ({"train": {"strategy": "fixed:0"}}, "train"),
    ({"train": {"opponents": ["ryu"]}}, "ryu"),
    ({"eval": {"opponents": ["ken"]}}, "ken"),
    ({"finetune": {"mode": "parallel"}}, "mode"),
    ({"checkpoint_every": 0}, "checkpoint_every"),
    ({"sim": {"rules": {"max_hp": -1}}}, "max_hp"),
])
def test_invalid_values(data, fragment):
    with pytest.raises(ConfigError, match=fragment):
        RunConfig.from_dict(data)


def test_invalid_json(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(tmp_path / "bad.json")
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_sim_overrides_reach_the_simulator():
    cfg = RunConfig.from_dict({"sim": {
        "rules": {"arena_width": 80.0},
        "bots": {"pulse_bot": {"period_l1": 50}},
        "moves": {"uppercut": {"damage": 20}},
    }})
    rules, roster = cfg.sim.build_rules(), cfg.sim.build_roster()
    assert rules.arena_width == 80.0
    assert rules.moves["uppercut"].damage == 20
    assert roster.params["pulse_bot"].period(1) == 50
    assert roster.params["rush_bot"] == RunConfig().sim.build_roster().params["rush_bot"]


def test_bot_variants():
    cfg = RunConfig.from_dict({
        "sim": {"bots": {"slow_pulse": {"base": "pulse_bot", "period_l1": 90}}},
        "eval": {"opponents": ["slow_pulse"]},
    })
    roster = cfg.sim.build_roster()
    roster.check("slow_pulse", 3)
    assert roster.params["slow_pulse"].period(1) == 90
    assert roster.params["pulse_bot"].period(1) != 90
    assert loads(dumps(cfg)) == cfg
    with pytest.raises(ConfigError, match="base"):
        RunConfig.from_dict({"sim": {"bots": {"ghost": {"period_l1": 9}}}})
    with pytest.raises(ConfigError, match="base"):
        RunConfig.from_dict({"sim": {"bots": {"ghost": {"base": "ghost_bot"}}}})


def test_run_dir():
    cfg = RunConfig.from_dict({"out_dir": "o", "run_name": "n"})
    assert str(cfg.run_dir) == "o/n"
    assert cfg.with_seed(4).train.seed == 4


def test_sweep_spec(tmp_path):
    spec = SweepSpec(STRATEGIES, RunConfig(run_name="t1"))
    runs = [spec.run_config(s) for s in STRATEGIES]
    assert len({r.run_dir for r in runs}) == len(STRATEGIES)
    assert [r.train.strategy for r in runs] == STRATEGIES
    (tmp_path / "s.json").write_text(json.dumps(spec.to_dict()))
    assert load_sweep(tmp_path / "s.json") == spec


@pytest.mark.parametrize("strategies,fragment", [
    (["fixed:4", "fixed:4"], "distinct"),
    ([], "at least one"),
    (["fixed:4", "sometimes:3"], "strategies"),
])
def test_bad_sweeps(strategies, fragment):
    with pytest.raises(ConfigError, match=fragment):
        SweepSpec(strategies, RunConfig())


def test_sweep_file_errors(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps({"base": {}}))
    with pytest.raises(ConfigError, match="strategies"):
        load_sweep(tmp_path / "s.json")
    (tmp_path / "s.json").write_text(json.dumps({"strategies": ["fixed:4"], "extra": 1}))
    with pytest.raises(ConfigError, match="unknown key extra"):
        load_sweep(tmp_path / "s.json")
