"""Per-round schedulers: TP-DDPG and the comparison baselines.

Every scheduler answers three questions for the simulator: which clients
run at what CPU frequency and power (``decide``), how they are associated
and how bandwidth is split (``plan``), and how to re-split bandwidth after
the energy gate drops clients (``rebalance``).
"""
from __future__ import annotations

import enum
import math

import numpy as np

from .bandwidth import even_split
from .config import SystemConfig
from .cost_model import RoundAction, RoundPlan, spectral_efficiency
from .ddpg import AgentBundle, ReplayBuffer, decode_action, noise_sigma
from .scaba import ServerCosts, greedy_plan, group, init_association, run_scaba


class SchedulerKind(str, enum.Enum):
    TPDDPG = "TPDDPG"
    GA = "GA"
    EBA = "EBA"
    RS = "RS"
    NS = "NS"
    DDPG_ONLY = "DDPG_ONLY"
    HO = "HO"


def optimal_bandwidth(sim, action: RoundAction, assoc) -> RoundPlan:
    assoc = {k: sorted(m) for k, m in assoc.items()}
    selected = [n for m in assoc.values() for n in m]
    if not selected:
        return RoundPlan(assoc, {})
    _, bw = ServerCosts(selected, action, sim.channels, sim.clients, sim.cfg).evaluate(assoc)
    return RoundPlan(assoc, bw)


def even_bandwidth(assoc) -> RoundPlan:
    bw = {}
    for members in assoc.values():
        bw.update(even_split(sorted(members)))
    return RoundPlan({k: sorted(m) for k, m in assoc.items()}, bw)


def decide_ga(selected, channels, cfg: SystemConfig) -> dict[int, list[int]]:
    return group(init_association(selected, channels), cfg.K)


def decide_eba(plan: RoundPlan) -> RoundPlan:
    return even_bandwidth(plan.assoc)


def decide_rs(n_select: int, N: int, rng: np.random.Generator) -> list[int]:
    if not 0 <= n_select <= N:
        raise ValueError(f"n_select={n_select} outside [0, {N}]")
    return sorted(int(n) for n in rng.choice(N, size=n_select, replace=False))


def max_feasible_scale(client, b: float, h: float, cfg: SystemConfig,
                       s_min: float = 1e-3, iters: int = 50) -> float:
    """Largest s in [s_min, 1] with f = s f_max and p = s p_max meeting the energy gate.

    The gate uses the expected on-time harvest. Net demand (spent minus
    harvested) grows with s, so bisection applies.
    """
    work = cfg.R2 * client.c_n * cfg.M * cfg.beta

    def slack(s):
        f, p = s * client.f_max, s * client.p_max
        t_cmp = work / f
        se = spectral_efficiency(p, h, cfg.psi)
        t_com = cfg.zeta / (b * cfg.B * se) if se > 0 else math.inf
        spent = client.u_n * f ** 2 * work + p * t_com
        return client.battery + client.harvest_mean * (t_cmp + t_com) - spent

    if slack(1.0) >= 0:
        return 1.0
    if slack(s_min) < 0:
        return s_min
    lo, hi = s_min, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if slack(mid) >= 0:
            lo = mid
        else:
            hi = mid
    return lo


def max_feasible_action(sim, selected, assoc, bw) -> RoundAction:
    cfg = sim.cfg
    server = {n: k for k, m in assoc.items() for n in m}
    alpha = np.zeros(cfg.N, dtype=int)
    f = np.zeros(cfg.N)
    p = np.zeros(cfg.N)
    for n in selected:
        c = sim.clients[n]
        s = max_feasible_scale(c, bw[n], sim.channels[n, server[n]], cfg)
        alpha[n], f[n], p[n] = 1, s * c.f_max, s * c.p_max
    return RoundAction(alpha, f, p)


class Scheduler:
    kind: SchedulerKind

    def begin_episode(self, sim, episode: int, total_episodes: int):
        pass

    def decide(self, sim) -> RoundAction:
        raise NotImplementedError

    def plan(self, sim, action: RoundAction) -> RoundPlan:
        return run_scaba(action.selected, action, sim.channels, sim.clients, sim.cfg,
                         sim.streams["scaba"], trace=sim.trace_scaba).plan

    def rebalance(self, sim, action: RoundAction, plan: RoundPlan) -> RoundPlan:
        return optimal_bandwidth(sim, action, plan.assoc)

    def observe(self, sim, s, record, s2, done):
        return None


class TPDDPGScheduler(Scheduler):
    """DDPG picks selection, frequency and power; SCABA does the rest."""

    kind = SchedulerKind.TPDDPG

    def __init__(self, agent: AgentBundle, buffer: ReplayBuffer | None = None,
                 learn: bool = True, explore: bool = True):
        self.agent = agent
        self.buffer = buffer
        self.learn = learn and buffer is not None
        self.explore = explore
        self.sigma = 0.0
        self.last_raw = None
        self.rng_noise = None
        self.rng_sample = None

    def begin_episode(self, sim, episode, total_episodes):
        self.sigma = noise_sigma(episode, total_episodes, sim.cfg) if self.explore else 0.0
        if self.rng_noise is None:
            self.rng_noise = sim.streams["exploration"]
        if self.rng_sample is None:
            self.rng_sample = sim.streams["sampling"]

    def policy_raw(self, sim) -> np.ndarray:
        raw = self.agent.act(sim.state())
        if self.sigma > 0:
            raw = np.clip(raw + self.rng_noise.normal(0.0, self.sigma, size=raw.shape), -1, 1)
        self.last_raw = raw
        return raw

    def decide(self, sim) -> RoundAction:
        return decode_action(self.policy_raw(sim), sim.clients, sim.t, sim.cfg)

    def observe(self, sim, s, record, s2, done):
        if not self.learn:
            return None
        self.buffer.add(s, self.last_raw, record.reward * sim.cfg.reward_scale, s2, done)
        if not self.buffer.full:
            return None
        batch = self.buffer.sample(sim.cfg.M_prime, self.rng_sample)
        return self.agent.update(batch, sim.cfg)


class GAScheduler(TPDDPGScheduler):
    """Strongest-gain association, optimal bandwidth; phase 1 from the DDPG policy."""

    kind = SchedulerKind.GA

    def plan(self, sim, action):
        return greedy_plan(action.selected, action, sim.channels, sim.clients, sim.cfg)[0]


class EBAScheduler(TPDDPGScheduler):
    """SCABA association with the server band split evenly."""

    kind = SchedulerKind.EBA

    def plan(self, sim, action):
        return decide_eba(super().plan(sim, action))

    def rebalance(self, sim, action, plan):
        return even_bandwidth(plan.assoc)


class NSScheduler(TPDDPGScheduler):
    """Decisions are frozen for the whole cloud round."""

    kind = SchedulerKind.NS

    def begin_episode(self, sim, episode, total_episodes):
        super().begin_episode(sim, episode, total_episodes)
        self.cached_action = None
        self.cached_plan = None

    def boundary(self, sim) -> bool:
        return (sim.t - 1) % sim.cfg.R1 == 0

    def decide(self, sim):
        if self.boundary(sim) or self.cached_action is None:
            self.cached_action = super().decide(sim)
            self.cached_raw = self.last_raw
            self.cached_plan = None
        self.last_raw = self.cached_raw
        return self.cached_action.copy()

    def plan(self, sim, action):
        if self.cached_plan is None:
            self.cached_plan = super().plan(sim, action)
            return self.cached_plan
        keep = set(action.selected)
        if not keep <= set(self.cached_plan.bw):
            return super().plan(sim, action)
        assoc = {k: [n for n in m if n in keep] for k, m in self.cached_plan.assoc.items()}
        if keep == set(self.cached_plan.bw):
            return self.cached_plan
        return self.rebalance(sim, action, RoundPlan(assoc, {}))


class RSScheduler(Scheduler):
    """Random fixed-size selection with the largest energy-feasible f and p."""

    kind = SchedulerKind.RS

    def __init__(self, n_select: int):
        self.n_select = n_select

    def decide(self, sim):
        selected = decide_rs(self.n_select, sim.cfg.N, sim.streams["selection"])
        assoc = decide_ga(selected, sim.channels, sim.cfg)
        return max_feasible_action(sim, selected, assoc, even_bandwidth(assoc).bw)


class HOScheduler(Scheduler):
    """Top-battery selection, greedy association, block-coordinate (f, p, b)."""

    kind = SchedulerKind.HO

    def __init__(self, n_select: int, max_sweeps: int = 20):
        self.n_select = n_select
        self.max_sweeps = max_sweeps
        self.sweep_delays = []

    def decide(self, sim):
        batteries = np.array([c.battery for c in sim.clients])
        selected = sorted(int(n) for n in np.argsort(-batteries, kind="stable")[:self.n_select])
        assoc = decide_ga(selected, sim.channels, sim.cfg)
        action, plan, self.sweep_delays = refine_holistic(sim, selected, assoc, self.max_sweeps)
        self._plan = plan
        return action

    def plan(self, sim, action):
        if set(action.selected) == set(self._plan.bw):
            return self._plan
        keep = set(action.selected)
        assoc = {k: [n for n in m if n in keep] for k, m in self._plan.assoc.items()}
        return optimal_bandwidth(sim, action, assoc)


def refine_holistic(sim, selected, assoc, max_sweeps: int = 20):
    """Alternate max-feasible (f, p) and optimal bandwidth until no server gets faster.

    Returns the action, plan and the per-sweep server delays; a sweep that
    would slow any server down is rejected, so delays never increase.
    """
    plan = even_bandwidth(assoc)
    best = None
    sweeps = []
    for _ in range(max_sweeps):
        action = max_feasible_action(sim, selected, assoc, plan.bw)
        new_plan = optimal_bandwidth(sim, action, assoc)
        delays = _server_delays(sim, action, new_plan)
        if best is not None and any(d > b + 1e-12 for d, b in zip(delays, sweeps[-1])):
            break
        converged = best is not None and all(
            abs(new_plan.bw[n] - best[1].bw[n]) < 1e-9 for n in new_plan.bw)
        best = (action, new_plan)
        sweeps.append(delays)
        plan = new_plan
        if converged:
            break
    if best is None:
        return RoundAction(np.zeros(sim.cfg.N, dtype=int), np.zeros(sim.cfg.N),
                           np.zeros(sim.cfg.N)), RoundPlan(assoc, {}), []
    return best[0], best[1], sweeps


def _server_delays(sim, action, plan) -> list[float]:
    selected = [n for m in plan.assoc.values() for n in m]
    if not selected:
        return [0.0] * sim.cfg.K
    costs = ServerCosts(selected, action, sim.channels, sim.clients, sim.cfg)
    return [costs.solve(k, plan.assoc[k])[0] for k in range(sim.cfg.K)]


class DDPGOnlyScheduler(TPDDPGScheduler):
    """One actor emits every decision, association and bandwidth included.

    Action layout beyond the first 3N entries: N*K server scores (row-major
    by client), then N bandwidth weights.
    """

    kind = SchedulerKind.DDPG_ONLY

    @staticmethod
    def action_dim(cfg: SystemConfig) -> int:
        return cfg.N * (cfg.K + 4)

    def plan(self, sim, action):
        return decide_ddpg_only(self.last_raw, action, sim.cfg)

    def rebalance(self, sim, action, plan):
        return decide_ddpg_only(self.last_raw, action, sim.cfg)


def decide_ddpg_only(raw, action: RoundAction, cfg: SystemConfig) -> RoundPlan:
    N, K = cfg.N, cfg.K
    raw = np.asarray(raw, dtype=float)
    logits = raw[3 * N:3 * N + N * K].reshape(N, K)
    weights = (np.clip(raw[3 * N + N * K:3 * N + N * K + N], -1, 1) + 1) / 2
    assoc = {k: [] for k in range(K)}
    for n in action.selected:
        assoc[int(np.argmax(logits[n]))].append(n)
    bw = {}
    for members in assoc.values():
        total = sum(weights[n] for n in members)
        if not members:
            continue
        if total <= 0:
            bw.update(even_split(members))
            continue
        shares = [weights[n] / total for n in members]
        shares[-1] = 1.0 - sum(shares[:-1])
        bw.update(zip(members, shares))
    return RoundPlan(assoc, bw)


def make_scheduler(kind, cfg: SystemConfig, agent: AgentBundle | None = None,
                   buffer: ReplayBuffer | None = None, n_select: int | None = None,
                   learn: bool = True, rng: np.random.Generator | None = None):
    kind = SchedulerKind(kind)
    n_select = cfg.N if n_select is None else n_select
    if kind is SchedulerKind.RS:
        return RSScheduler(n_select)
    if kind is SchedulerKind.HO:
        return HOScheduler(n_select)
    action_dim = DDPGOnlyScheduler.action_dim(cfg) if kind is SchedulerKind.DDPG_ONLY else 3 * cfg.N
    if agent is None:
        agent = AgentBundle.for_config(cfg, action_dim, rng)
    if buffer is None and learn:
        buffer = ReplayBuffer(cfg.replay_capacity, cfg.state_dim, action_dim)
    cls = {SchedulerKind.TPDDPG: TPDDPGScheduler, SchedulerKind.GA: GAScheduler,
           SchedulerKind.EBA: EBAScheduler, SchedulerKind.NS: NSScheduler,
           SchedulerKind.DDPG_ONLY: DDPGOnlyScheduler}[kind]
    return cls(agent, buffer, learn=learn, explore=learn)
