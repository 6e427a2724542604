"""Edge-round simulation loop shared by every scheduler.

Each round: the scheduler picks selection, CPU frequency and power (phase 1),
then association and bandwidth (phase 2). Invalid or energy-infeasible
clients are dropped before anything is executed, so batteries never go
negative; drops are reported as violations and penalised in the reward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig, spawn_stream
from .cost_model import (RoundAction, RoundPlan, check_feasibility,
                         evaluate_round, full_band_time, utility)
from .ddpg import reward
from .environment import (StateNormalizer, apply_round_transition, assemble_state,
                          draw_channels, harvest_energy, init_world, reset_clients)

STREAMS = ("world", "calibration", "channel", "energy", "init", "exploration",
           "sampling", "scaba", "selection", "fl")

ROUND_COLUMNS = ["episode", "round", "cloud", "n_selected", "T", "objective", "reward",
                 "n_violations", "violations", "selected", "assoc", "server_delay",
                 "battery_min", "battery_max"]


@dataclass
class RoundRecord:
    episode: int
    round: int
    cloud: bool
    n_selected: int
    T: float
    objective: float
    reward: float
    violations: list
    selected: list
    assoc: dict
    server_delay: list
    battery_min: float
    battery_max: float
    plan: RoundPlan | None = None
    spent: list | None = None          # J per client, compute plus upload
    harvested_on: list | None = None   # J per client harvested during on-time
    battery_start: list | None = None  # J per client before the round

    def row(self) -> list:
        viol = ";".join(f"{n}:{c}" for n, c in self.violations)
        assoc = ";".join(f"{k}:" + "|".join(map(str, m)) for k, m in sorted(self.assoc.items()))
        return [self.episode, self.round, int(self.cloud), self.n_selected, self.T,
                self.objective, self.reward, len(self.violations), viol,
                "|".join(map(str, self.selected)), assoc,
                "|".join(_fmt(x) for x in self.server_delay), self.battery_min, self.battery_max]


def _fmt(x) -> str:
    return f"{x:.9g}" if isinstance(x, float) else str(x)


@dataclass
class EpisodeResult:
    episode: int
    utility: float
    mean_selected: float
    total_delay: float
    violations: int
    critic_loss: float
    actor_objective: float
    rounds: list = field(default_factory=list)

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.rounds]


class Simulator:
    """Owns the world and its random streams for one run."""

    def __init__(self, cfg: SystemConfig, seed: int | None = None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.streams = {label: spawn_stream(self.seed, label) for label in STREAMS}
        self.base_clients, self.servers = init_world(cfg, self.streams["world"])
        self.normalizer = StateNormalizer.calibrate(cfg, self.base_clients, self.servers,
                                                    self.streams["calibration"])
        self.clients = reset_clients(self.base_clients, cfg)
        self.t = 1
        self.channels = None
        self.trace_scaba = False

    def reset(self):
        self.clients = reset_clients(self.base_clients, self.cfg)
        self.t = 1
        self.channels = draw_channels(self.clients, self.servers, self.streams["channel"])

    def raw_state(self) -> np.ndarray:
        return assemble_state(self.clients, self.channels, self.t, self.cfg.F)

    def state(self) -> np.ndarray:
        return self.normalizer(self.raw_state())

    @property
    def cloud_round(self) -> bool:
        return self.t % self.cfg.R1 == 0

    def invalid_clients(self, action: RoundAction) -> list[int]:
        bad = []
        for n in action.selected:
            no_rate = all(math.isinf(full_band_time(self.cfg, action.p[n], self.channels[n, k]))
                          for k in range(self.cfg.K))
            if action.f[n] <= 0 or action.p[n] <= 0 or no_rate:
                bad.append(n)
        return bad

    def step(self, scheduler, episode: int = 0) -> RoundRecord:
        cfg = self.cfg
        action = scheduler.decide(self)
        violations = [(n, "energy") for n in self.invalid_clients(action)]
        if violations:
            action = action.without(n for n, _ in violations)
        plan = scheduler.plan(self, action)
        energy_rng = self.streams["energy"]
        while True:
            plan.check(action.selected, tol=1e-9)
            outcome = evaluate_round(action, plan, self.channels, self.clients, cfg)
            e_ho = np.zeros(cfg.N)
            for n in action.selected:
                e_ho[n] = harvest_energy(self.clients[n].harvest_mean, outcome.t_on[n], energy_rng)
            failed = [n for n, c in check_feasibility(action, outcome, self.clients, e_ho,
                                                      self.t, cfg.F) if c == "energy"]
            if not failed:
                break
            violations += [(n, "energy") for n in failed]
            action = action.without(failed)
            plan = scheduler.rebalance(self, action, _drop(plan, failed))
        violations += [v for v in check_feasibility(action, outcome, self.clients, e_ho,
                                                    self.t, cfg.F) if v[1] == "staleness"]
        violations.sort()
        r = reward(outcome.objective, bool(violations), cfg)
        cloud = self.cloud_round
        battery_start = [c.battery for c in self.clients]
        self.clients = [
            apply_round_transition(c, outcome.e_cmp[n], outcome.e_com[n], outcome.t_on[n],
                                   outcome.T, cloud, cfg, energy_rng, e_ho=e_ho[n], t=self.t)
            for n, c in enumerate(self.clients)
        ]
        batteries = [c.battery for c in self.clients] + [c.battery_end_on for c in self.clients]
        rec = RoundRecord(episode, self.t, cloud, outcome.n_selected, outcome.T,
                          outcome.objective, r, violations, action.selected,
                          {k: list(m) for k, m in plan.assoc.items()},
                          [float(x) for x in outcome.server_delay],
                          float(min(batteries)), float(max(batteries)), plan,
                          spent=[float(x) for x in outcome.e_cmp + outcome.e_com],
                          harvested_on=[float(x) for x in e_ho],
                          battery_start=battery_start)
        self.t += 1
        self.channels = draw_channels(self.clients, self.servers, self.streams["channel"])
        return rec

    def run_episode(self, scheduler, episode: int = 0, total_episodes: int = 1,
                    on_round=None) -> EpisodeResult:
        self.reset()
        scheduler.begin_episode(self, episode, total_episodes)
        rounds, losses, _objectives = [], [], []
        for _ in range(self.cfg.rounds):
            s = self.state()
            rec = self.step(scheduler, episode)
            done = self.t > self.cfg.rounds
            stats = scheduler.observe(self, s, rec, self.state(), done)
            if stats is not None:
                losses.append(stats)
            if on_round is not None:
                on_round(self, rec)
            rounds.append(rec)
        c_loss = float(np.mean([l for l, _ in losses])) if losses else float("nan")
        a_obj = float(np.mean([j for _, j in losses])) if losses else float("nan")
        return EpisodeResult(
            episode=episode,
            utility=utility([r.objective for r in rounds], self.cfg),
            mean_selected=float(np.mean([r.n_selected for r in rounds])),
            total_delay=float(sum(r.T for r in rounds)) + self.cfg.R * self.cfg.T_g,
            violations=sum(len(r.violations) for r in rounds),
            critic_loss=c_loss, actor_objective=a_obj, rounds=rounds)


def _drop(plan: RoundPlan, drop) -> RoundPlan:
    drop = set(drop)
    assoc = {k: [n for n in m if n not in drop] for k, m in plan.assoc.items()}
    bw = {n: b for n, b in plan.bw.items() if n not in drop}
    return RoundPlan(assoc, bw)
