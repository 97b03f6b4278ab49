"""Command-line entry points: train, eval, finetune, sweep and trace.

Every command takes a JSON run config. Failures exit with status 2 and a
single line on stderr of the form ``skipfight: error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import numpy as np

from .agent import GREEDY, check_layout, decide
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, load_config, load_sweep, save_config
from .evaluation import evaluate, matchup_row, write_matchup_csv
from .ppo import NonFiniteLossError, Trainer, finetune, finetune_config
from .sim import MicroFighterEnv
from .sim.env import write_trace_csv
from .sim.moves import ActionCommand
from .skip import parse_strategy
from .telemetry import telemetry_header

log = logging.getLogger("skipfight")

EXIT_OK, EXIT_ERROR = 0, 2


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


# -- output files ------------------------------------------------------------------

def _telemetry_rows(rows):
    for r in rows:
        yield ([r.episode, repr(r.ep_reward), r.ep_frames]
               + [repr(float(x)) for x in np.concatenate(r.groups)])


class RunWriter:
    """Appends telemetry and diagnostics rows as training progresses."""

    def __init__(self, run_dir: Path, skip_values, resume_from: Optional[Checkpoint] = None):
        self.dir = run_dir
        self.telemetry = run_dir / "telemetry.csv"
        self.diagnostics = run_dir / "diagnostics.csv"
        self.skip_values = skip_values
        self._n_tel = 0
        self._n_diag = 0
        self._diag_cols: Optional[list] = None
        if resume_from is None:
            with open(self.telemetry, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(telemetry_header(skip_values))
            self.diagnostics.unlink(missing_ok=True)
        else:
            # drop rows written after the checkpoint we resume from
            _truncate_csv(self.telemetry, int(resume_from.extra.get("episodes", 0)))
            self._diag_cols = _truncate_csv(self.diagnostics, resume_from.updates)

    def flush(self, trainer: Trainer) -> None:
        new = trainer.telemetry[self._n_tel:]
        with open(self.telemetry, "a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(_telemetry_rows(new))
        self._n_tel = len(trainer.telemetry)
        diags = trainer.diagnostics[self._n_diag:]
        if diags:
            if self._diag_cols is None:
                self._diag_cols = sorted(diags[0])
                with open(self.diagnostics, "w", newline="") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(self._diag_cols)
            with open(self.diagnostics, "a", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                for d in diags:
                    w.writerow([repr(d[c]) if isinstance(d[c], float) else d[c] for c in self._diag_cols])
        self._n_diag = len(trainer.diagnostics)


def _truncate_csv(path: Path, keep: int) -> Optional[list]:
    """Keep the header and the first ``keep`` data rows; return the header."""
    if not path.exists():
        return None
    lines = path.read_text().splitlines(keepends=True)
    if not lines:
        return None
    path.write_text("".join(lines[: keep + 1]))
    return next(csv.reader([lines[0]]))


def trainer_checkpoint(tr: Trainer) -> Checkpoint:
    extra = {"episodes": tr.episodes_done, "rng": tr.rng.bit_generator.state}
    return Checkpoint(tr.policy, tr.strategy, tr.steps_done, tr.updates_done, tr.optimizer, extra)


def restore_trainer(tr: Trainer, ckpt: Checkpoint) -> None:
    """Load weights, optimizer moments, counters and RNG from ``ckpt``.

    Episodes running when the checkpoint was written are not stored, so the
    resumed run starts fresh episodes.
    """
    check_layout(ckpt.policy, tr.strategy)
    tr.policy = ckpt.policy
    if ckpt.optimizer is not None:
        tr.optimizer = ckpt.optimizer
    tr.steps_done = ckpt.training_step
    tr.updates_done = ckpt.updates
    tr.episodes_done = int(ckpt.extra.get("episodes", 0))
    if "rng" in ckpt.extra:
        tr.rng.bit_generator.state = ckpt.extra["rng"]


def _load_checkpoint(path) -> Checkpoint:
    if not Path(path).is_file():
        raise CliError("checkpoint", f"checkpoint file not found: {path}")
    return load_checkpoint(path)


def _strategy_matches(ckpt: Checkpoint, cfg: RunConfig) -> None:
    want = parse_strategy(cfg.train.strategy)
    if ckpt.strategy.layout != want.layout or ckpt.strategy.values != want.values:
        raise CliError(
            "layout",
            f"checkpoint layout {ckpt.policy.layout} ({ckpt.strategy}) does not match configured "
            f"strategy {cfg.train.strategy} (layout {want.layout})",
        )


# -- commands ----------------------------------------------------------------------

def cmd_train(cfg: RunConfig, checkpoint: Optional[str] = None) -> Path:
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(cfg, run_dir / "config.json")
    rules, roster = cfg.sim.build_rules(), cfg.sim.build_roster()
    tr = Trainer(cfg.train, rules=rules, roster=roster)
    ckpt = None
    if checkpoint is not None:
        ckpt = _load_checkpoint(checkpoint)
        _strategy_matches(ckpt, cfg)
        restore_trainer(tr, ckpt)
    writer = RunWriter(run_dir, tr.strategy.values, ckpt)
    ckpt_dir = run_dir / "checkpoints"

    def on_update(t: Trainer) -> None:
        writer.flush(t)
        if t.updates_done % cfg.checkpoint_every == 0:
            save_checkpoint(trainer_checkpoint(t), ckpt_dir / "latest.ckpt")

    tr.train(on_update=on_update)
    writer.flush(tr)
    final = trainer_checkpoint(tr)
    save_checkpoint(final, ckpt_dir / "latest.ckpt")
    save_checkpoint(final, ckpt_dir / "final.ckpt")
    print(f"trained {cfg.train.strategy}: {tr.updates_done} updates, {tr.steps_done} decisions, "
          f"{tr.episodes_done} episodes -> {ckpt_dir / 'final.ckpt'}")
    return ckpt_dir / "final.ckpt"


def _matchup(cfg: RunConfig, ckpt: Checkpoint, opponents, label: str) -> list:
    rules, roster = cfg.sim.build_rules(), cfg.sim.build_roster()
    rows = []
    for opp in opponents:
        rep = evaluate(ckpt.policy, ckpt.strategy, opp, cfg.eval.config, rules, roster)
        rows.append(matchup_row(label, rep, cfg.eval.config.levels))
        print(f"{label} vs {opp}: {rep.wins}/{rep.n_games} won, "
              f"win rate {rep.win_rate:.3f} +/- {rep.ci_half_width:.3f}")
    return rows


def cmd_eval(cfg: RunConfig, checkpoint: str) -> Path:
    ckpt = _load_checkpoint(checkpoint)
    _strategy_matches(ckpt, cfg)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    rows = _matchup(cfg, ckpt, cfg.eval.opponents, str(ckpt.strategy))
    write_matchup_csv(rows, run_dir / "matchup.csv")
    return run_dir / "matchup.csv"


SWITCH_COLUMNS = ("update", "steps", "episode", "opponent")


def cmd_finetune(cfg: RunConfig, checkpoint: str) -> Path:
    ckpt = _load_checkpoint(checkpoint)
    _strategy_matches(ckpt, cfg)
    ft = cfg.finetune
    base = finetune_config(cfg.train, ft.budget_fraction)
    rules, roster = cfg.sim.build_rules(), cfg.sim.build_roster()
    out = cfg.run_dir / "finetune" / ft.mode
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, cfg.run_dir / "config.json")
    results = finetune(ckpt.policy, list(ft.opponents), ft.mode, base, rules, roster)
    rows = []
    for res in results:
        sub = out / res.opponent if ft.mode == "single" else out
        sub.mkdir(parents=True, exist_ok=True)
        tr = res.trainer
        writer = RunWriter(sub, tr.strategy.values)
        writer.flush(tr)
        save_checkpoint(trainer_checkpoint(tr), sub / "checkpoints" / "final.ckpt")
        if res.switches:
            with open(sub / "switches.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(SWITCH_COLUMNS)
                w.writerows(res.switches)
        tuned = Checkpoint(tr.policy, tr.strategy)
        rows += _matchup(cfg, tuned, sorted(set(ft.opponents)), f"{ckpt.strategy}+ft:{res.opponent}")
    write_matchup_csv(rows, out / "matchup.csv")
    return out


def cmd_sweep(sweep_path: str, seed: Optional[int] = None, out: Optional[str] = None) -> Path:
    spec = load_sweep(sweep_path)
    base = spec.base
    if seed is not None:
        base = base.with_seed(seed)
    if out is not None:
        base = replace(base, out_dir=out)
    spec = replace(spec, base=base)
    rows = []
    for strategy in spec.strategies:
        cfg = spec.run_config(strategy)
        final = cmd_train(cfg)
        rows += _matchup(cfg, load_checkpoint(final), cfg.eval.opponents, strategy)
    report = base.run_dir / "sweep.csv"
    report.parent.mkdir(parents=True, exist_ok=True)
    write_matchup_csv(rows, report)
    return report


def cmd_trace(cfg: RunConfig, checkpoint: Optional[str] = None, out: Optional[str] = None) -> Path:
    """Play one game and dump every frame to CSV."""
    rules, roster = cfg.sim.build_rules(), cfg.sim.build_roster()
    tc = cfg.trace
    roster.check(tc.opponent, tc.level)
    env = MicroFighterEnv(rules, roster)
    env.start_trace()
    obs = env.reset(cfg.seed, tc.opponent, tc.level)
    rng = np.random.Generator(np.random.PCG64(cfg.seed + 1))
    if checkpoint is not None:
        ckpt = _load_checkpoint(checkpoint)
        _strategy_matches(ckpt, cfg)
        while not env.terminal:
            d = decide(ckpt.policy, ckpt.strategy, obs, rng, GREEDY, 0.0)
            command = ActionCommand.from_flat(int(d.action_idx[0]))
            for _ in range(d.skips[0].n_frames):
                if env.terminal:
                    break
                env.step(command)
            obs = env.observe()
    else:
        roster.check(tc.p1_bot, tc.p1_level)
        memory: dict = {}
        while not env.terminal:
            env.step(roster.act(tc.p1_bot, tc.p1_level, env.state, rng, memory, as_p1=True))
    path = Path(out) if out is not None else cfg.run_dir / "trace.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(env.trace, path)
    return path


# -- argument parsing --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="skipfight", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every PPO update")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint: str):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument("--out", help="override the output directory")
        if checkpoint == "required":
            p.add_argument("--checkpoint", required=True)
        elif checkpoint == "optional":
            p.add_argument("--checkpoint")

    common(sub.add_parser("train", help="train a policy (pass --checkpoint to resume)"), "optional")
    common(sub.add_parser("eval", help="evaluate a checkpoint and write matchup.csv"), "required")
    common(sub.add_parser("finetune", help="finetune a checkpoint against new opponents"), "required")
    sw = sub.add_parser("sweep", help="train and evaluate every strategy of a sweep file")
    sw.add_argument("--config", required=True, help="JSON sweep file")
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out")
    tr = sub.add_parser("trace", help="dump a per-frame CSV of one game")
    tr.add_argument("--config", required=True)
    tr.add_argument("--checkpoint")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--out", help="CSV path (default <run dir>/trace.csv)")
    return parser


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    if args.out is not None and args.command != "trace":
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.command == "sweep":
        print(cmd_sweep(args.config, args.seed, args.out))
        return EXIT_OK
    cfg = _run_config(args)
    if args.command == "train":
        cmd_train(cfg, args.checkpoint)
    elif args.command == "eval":
        print(cmd_eval(cfg, args.checkpoint))
    elif args.command == "finetune":
        print(cmd_finetune(cfg, args.checkpoint))
    else:
        print(cmd_trace(cfg, args.checkpoint, args.out))
    return EXIT_OK


def _error_kind(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, ConfigError):
        return "config"
    if isinstance(exc, CheckpointError):
        return "checkpoint"
    if isinstance(exc, NonFiniteLossError):
        return "nonfinite-loss"
    if isinstance(exc, OSError):
        return "io"
    return "invalid"


def main(argv=None) -> int:
    try:
        return run(argv)
    except (CliError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        msg = " ".join(str(msg).split())
        print(f"skipfight: error[{_error_kind(exc)}]: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
