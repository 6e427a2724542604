"""Straggler-aware client association and bandwidth allocation (SCABA).

Local search over client-to-server associations: starting from the
strongest-gain association, clients of the slowest server are moved or
swapped to other servers while the round delay strictly drops. Server
configurations that were already the straggler are remembered and skipped.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import BwInstance, even_split, solve_bandwidth
from .config import SystemConfig
from .cost_model import RoundAction, RoundPlan, cmp_latency, full_band_time

log = logging.getLogger(__name__)


class NoFeasibleClient(ValueError):
    def __init__(self, clients):
        super().__init__(f"clients {sorted(clients)} have zero rate to every server")
        self.clients = sorted(clients)


class TooLarge(ValueError):
    pass


@dataclass
class ScabaResult:
    plan: RoundPlan
    T: float
    server_delay: list[float]
    initial_T: float
    history: list[float] = field(default_factory=list)   # incumbent T after each acceptance
    moves: list[tuple] = field(default_factory=list)       # (iteration, kind, old T, new T)


def init_association(selected, channels) -> dict[int, int]:
    """Each client to its strongest-gain server; np.argmax breaks ties low."""
    return {n: int(np.argmax(channels[n])) for n in selected}


def group(assign: dict[int, int], K: int) -> dict[int, list[int]]:
    out = {k: [] for k in range(K)}
    for n in sorted(assign):
        out[assign[n]].append(n)
    return out


class ServerCosts:
    """Per-round coefficients and a cache of per-server bandwidth solves."""

    def __init__(self, selected, action: RoundAction, channels, clients, cfg: SystemConfig):
        self.cfg = cfg
        self.fixed = {n: cmp_latency(1, cfg, clients[n].c_n, action.f[n]) + cfg.T_e
                      for n in selected}
        self.load = {(n, k): full_band_time(cfg, action.p[n], channels[n, k])
                     for n in selected for k in range(cfg.K)}
        self._cache: dict[tuple[int, frozenset], tuple[float, dict]] = {}
        dead = [n for n in selected
                if all(math.isinf(self.load[n, k]) for k in range(cfg.K))]
        if dead:
            raise NoFeasibleClient(dead)

    def solve(self, k: int, members) -> tuple[float, dict[int, float]]:
        key = (k, frozenset(members))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        members = sorted(members)
        if not members:
            out = (0.0, {})
        elif any(math.isinf(self.load[n, k]) for n in members):
            out = (math.inf, even_split(members))
        else:
            inst = BwInstance(tuple(self.fixed[n] for n in members),
                              tuple(self.load[n, k] for n in members))
            b, T = solve_bandwidth(inst, self.cfg.bw_tol)
            out = (T, dict(zip(members, b)))
        self._cache[key] = out
        return out

    def evaluate(self, assoc: dict[int, list[int]]):
        delays, bw = [], {}
        for k in range(self.cfg.K):
            T, b = self.solve(k, assoc[k])
            delays.append(T)
            bw.update(b)
        return delays, bw


def _straggler(delays) -> int:
    return int(np.argmax(delays))


def run_scaba(selected, action: RoundAction, channels, clients, cfg: SystemConfig,
              rng: np.random.Generator, trace: bool = False) -> ScabaResult:
    selected = sorted(selected)
    K = cfg.K
    if not selected:
        return ScabaResult(RoundPlan({k: [] for k in range(K)}, {}), 0.0, [0.0] * K, 0.0, [0.0])
    costs = ServerCosts(selected, action, channels, clients, cfg)
    best = group(init_association(selected, channels), K)
    best_delays, best_bw = costs.evaluate(best)
    v_star = _straggler(best_delays)
    history = {(v_star, frozenset(best[v_star]))}
    result = ScabaResult(None, best_delays[v_star], best_delays, best_delays[v_star],
                         [best_delays[v_star]])

    def attempt(candidate, iteration, kind):
        nonlocal best, best_delays, best_bw, v_star
        if any((k, frozenset(candidate[k])) in history for k in range(K)):
            return False
        delays, bw = costs.evaluate(candidate)
        v = _straggler(delays)
        history.add((v, frozenset(candidate[v])))
        if delays[v] < best_delays[v_star]:
            result.moves.append((iteration, kind, best_delays[v_star], delays[v]))
            if trace:
                log.info("scaba iter=%d %s T %.9g -> %.9g", iteration, kind,
                         best_delays[v_star], delays[v])
            best, best_delays, best_bw, v_star = candidate, delays, bw, v
            result.history.append(delays[v])
            return True
        return False

    for iteration in range(cfg.xi):
        improved = False
        for l in range(K):
            if l == v_star or not best[v_star]:
                continue
            cand = {k: list(m) for k, m in best.items()}
            n = cand[v_star].pop(int(rng.integers(len(cand[v_star]))))
            cand[l] = sorted(cand[l] + [n])
            if attempt(cand, iteration, "move"):
                improved = True
                break
        for l in range(K):
            if l == v_star or not best[v_star] or not best[l]:
                continue
            cand = {k: list(m) for k, m in best.items()}
            i = int(rng.integers(len(cand[v_star])))
            j = int(rng.integers(len(cand[l])))
            n, n2 = cand[v_star][i], cand[l][j]
            cand[v_star] = sorted(cand[v_star][:i] + cand[v_star][i + 1:] + [n2])
            cand[l] = sorted(cand[l][:j] + cand[l][j + 1:] + [n])
            if attempt(cand, iteration, "swap"):
                improved = True
                break
        if not improved:
            break

    result.plan = RoundPlan(best, best_bw)
    result.T = best_delays[v_star]
    result.server_delay = best_delays
    return result


def greedy_plan(selected, action: RoundAction, channels, clients, cfg: SystemConfig):
    """Strongest-gain association with optimal per-server bandwidth."""
    selected = sorted(selected)
    assoc = group(init_association(selected, channels), cfg.K)
    if not selected:
        return RoundPlan(assoc, {}), 0.0
    delays, bw = ServerCosts(selected, action, channels, clients, cfg).evaluate(assoc)
    return RoundPlan(assoc, bw), max(delays)


def enumerate_oracle(selected, action: RoundAction, channels, clients, cfg: SystemConfig):
    """Exact optimum over all K^|selected| associations."""
    selected = sorted(selected)
    if len(selected) > 8 or cfg.K > 3:
        raise TooLarge("enumeration limited to 8 clients and 3 servers")
    if not selected:
        return RoundPlan({k: [] for k in range(cfg.K)}, {}), 0.0
    costs = ServerCosts(selected, action, channels, clients, cfg)
    best_T, best_plan = math.inf, None
    for servers in itertools.product(range(cfg.K), repeat=len(selected)):
        assoc = group(dict(zip(selected, servers)), cfg.K)
        delays, bw = costs.evaluate(assoc)
        if max(delays) < best_T:
            best_T, best_plan = max(delays), RoundPlan(assoc, bw)
    return best_plan, best_T
