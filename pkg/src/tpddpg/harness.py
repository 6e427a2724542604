"""Experiment runner and command-line entry point."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import SchedulerKind, make_scheduler
from .config import ConfigError, SystemConfig, load_config, parse_overrides
from .ddpg import load_checkpoint, save_checkpoint
from .fl_trainer import HflTrainer, make_synthetic
from .simulation import ROUND_COLUMNS, Simulator

log = logging.getLogger(__name__)

EPISODE_COLUMNS = ["episode", "utility", "mean_selected", "total_delay", "violations",
                   "critic_loss", "actor_objective"]
SWEEP_VARS = ("bandwidth", "energy_rate", "n_clients", "n_select")


class SpecError(ValueError):
    pass


@dataclass
class ExperimentSpec:
    scheduler: str = "TPDDPG"
    episodes: int = 1
    cfg: SystemConfig = field(default_factory=SystemConfig)
    sweep_var: str | None = None
    sweep_values: list[float] = field(default_factory=list)
    out_dir: Path | None = None
    seed: int | None = None
    freeze: bool = False
    checkpoint: Path | None = None
    trace_scaba: bool = False
    dump_world: bool = False
    n_select: int | None = None
    fl: bool = False
    fl_eta: float = 0.05
    fl_samples: int = 200

    def validate(self):
        try:
            SchedulerKind(self.scheduler)
        except ValueError:
            raise SpecError(f"unknown scheduler {self.scheduler!r}") from None
        if self.episodes < 1:
            raise SpecError("episodes must be >= 1")
        if self.sweep_var is not None:
            if self.sweep_var not in SWEEP_VARS:
                raise SpecError(f"unknown sweep variable {self.sweep_var!r}")
            if not self.sweep_values:
                raise SpecError("empty sweep value list")
            if any(v <= 0 for v in self.sweep_values):
                raise SpecError("sweep values must be positive")


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.9g}"
    return str(x)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def apply_sweep(cfg: SystemConfig, var: str, value: float, n_select: int | None):
    if var == "bandwidth":
        return cfg.replace(B=float(value)), n_select
    if var == "energy_rate":
        return cfg.replace(e_h_range=(float(value), float(value))), n_select
    if var == "n_clients":
        return cfg.replace(N=int(value)), n_select
    if var == "n_select":
        return cfg, int(value)
    raise SpecError(f"unknown sweep variable {var!r}")


@dataclass
class RunResult:
    episodes: list
    accuracy: list
    agent: object = None


def run_episodes(cfg: SystemConfig, scheduler_kind: str, episodes: int, seed: int | None = None,
                 freeze: bool = False, agent=None, n_select: int | None = None,
                 trace_scaba: bool = False, fl: bool = False, fl_eta: float = 0.05,
                 fl_samples: int = 200) -> RunResult:
    """Run ``episodes`` FL tasks in one world; learning schedulers train unless frozen."""
    sim = Simulator(cfg, seed)
    sim.trace_scaba = trace_scaba
    learn = not freeze
    scheduler = make_scheduler(scheduler_kind, cfg, agent=agent, n_select=n_select,
                               learn=learn, rng=sim.streams["init"])
    data = make_synthetic(cfg.N, fl_samples, sim.streams["fl"]) if fl else None
    results, acc = [], []
    for ep in range(episodes):
        on_round = None
        if fl:
            trainer = HflTrainer(data, cfg.K, cfg.R1, cfg.R2, cfg.M, fl_eta, sim.streams["fl"])

            def on_round(_sim, rec, trainer=trainer):
                trainer.edge_round(rec.assoc)

        res = sim.run_episode(scheduler, episode=ep, total_episodes=episodes, on_round=on_round)
        results.append(res)
        if fl:
            acc += [(ep, *row) for row in trainer.history]
    return RunResult(results, acc, getattr(scheduler, "agent", None))


def tail_mean(values, frac: float = 0.2) -> float:
    k = max(1, int(round(len(values) * frac)))
    return float(np.mean(values[-k:]))


def run_experiment(spec: ExperimentSpec, out_dir: Path | None = None) -> RunResult:
    spec.validate()
    out = Path(out_dir or spec.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from None
    cfg = spec.cfg if spec.seed is None else spec.cfg.replace(seed=spec.seed)
    agent = None
    if spec.checkpoint is not None and Path(spec.checkpoint).exists():
        agent, _ = load_checkpoint(spec.checkpoint)
    res = run_episodes(cfg, spec.scheduler, spec.episodes, freeze=spec.freeze, agent=agent,
                       n_select=spec.n_select, trace_scaba=spec.trace_scaba, fl=spec.fl,
                       fl_eta=spec.fl_eta, fl_samples=spec.fl_samples)
    write_csv(out / "episodes.csv", EPISODE_COLUMNS,
              ([e.episode, e.utility, e.mean_selected, e.total_delay, e.violations,
                e.critic_loss, e.actor_objective] for e in res.episodes))
    write_csv(out / "rounds.csv", ROUND_COLUMNS,
              (r.row() for e in res.episodes for r in e.rounds))
    if spec.fl:
        write_csv(out / "accuracy.csv", ["episode", "cloud_round", "accuracy", "loss"],
                  res.accuracy)
    if spec.dump_world:
        sim = Simulator(cfg)
        world = {"servers": sim.servers, "clients": [c.to_dict() for c in sim.base_clients],
                 "normalizer": sim.normalizer.to_dict()}
        (out / "world.json").write_text(json.dumps(world, indent=2, sort_keys=True))
    if spec.checkpoint is not None and res.agent is not None and not spec.freeze:
        save_checkpoint(spec.checkpoint, res.agent, {"config": cfg.to_dict()})
    manifest = {
        "version": __version__, "scheduler": spec.scheduler, "episodes": spec.episodes,
        "seed": cfg.seed, "freeze": spec.freeze, "n_select": spec.n_select, "fl": spec.fl,
        "fl_eta": spec.fl_eta, "fl_samples": spec.fl_samples,
        "checkpoint": str(spec.checkpoint) if spec.checkpoint else None,
        "config": cfg.to_dict(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return res


def run_sweep(spec: ExperimentSpec) -> list[tuple[float, float]]:
    """One experiment per sweep value, all under the same seed (common random numbers)."""
    spec.validate()
    if spec.sweep_var is None:
        raise SpecError("no sweep variable set")
    out = Path(spec.out_dir)
    rows = []
    for value in spec.sweep_values:
        cfg, n_select = apply_sweep(spec.cfg, spec.sweep_var, value, spec.n_select)
        point = ExperimentSpec(**{**spec.__dict__, "cfg": cfg, "n_select": n_select,
                                  "sweep_var": None, "sweep_values": []})
        res = run_experiment(point, out / f"{spec.sweep_var}={fmt(float(value))}")
        rows.append((float(value), tail_mean([e.utility for e in res.episodes])))
    write_csv(out / "sweep.csv", [spec.sweep_var, "mean_utility"], rows)
    return rows


def _parse_sets(items) -> dict[str, str]:
    pairs = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    return pairs


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tpddpg", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment or sweep")
    run.add_argument("--config", type=Path)
    run.add_argument("--scheduler", default="TPDDPG", choices=[k.value for k in SchedulerKind])
    run.add_argument("--episodes", type=int, default=1)
    run.add_argument("--seed", type=int)
    run.add_argument("--out", type=Path, required=True)
    run.add_argument("--sweep", help="var=v1,v2,...")
    run.add_argument("--freeze", action="store_true")
    run.add_argument("--checkpoint", type=Path)
    run.add_argument("--trace-scaba", action="store_true")
    run.add_argument("--dump-world", action="store_true")
    run.add_argument("--set", action="append", dest="sets", metavar="KEY=VALUE")
    run.add_argument("--n-select", type=int)
    run.add_argument("--fl", action="store_true", help="also train the synthetic FL model")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.trace_scaba else logging.WARNING,
                        format="%(message)s")
    try:
        sets = _parse_sets(args.sets)
        if args.config is not None:
            cfg = load_config(args.config, sets)
        else:
            cfg = SystemConfig(**parse_overrides(sets))
        spec = ExperimentSpec(scheduler=args.scheduler, episodes=args.episodes, cfg=cfg,
                              out_dir=args.out, seed=args.seed, freeze=args.freeze,
                              checkpoint=args.checkpoint, trace_scaba=args.trace_scaba,
                              dump_world=args.dump_world, n_select=args.n_select, fl=args.fl)
        if args.sweep:
            var, _, values = args.sweep.partition("=")
            spec.sweep_var = var.strip()
            try:
                spec.sweep_values = [float(v) for v in values.split(",") if v.strip()]
            except ValueError:
                raise SpecError(f"bad sweep values {values!r}") from None
            run_sweep(spec)
        else:
            run_experiment(spec)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(f"invalid experiment: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
