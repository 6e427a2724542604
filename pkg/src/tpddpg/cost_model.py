"""Latency and energy formulas, the per-round objective and feasibility gates."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig


class InvalidAction(ValueError):
    """A selected client has zero CPU frequency or zero uplink rate."""


@dataclass
class RoundAction:
    alpha: np.ndarray   # 0/1 per client
    f: np.ndarray       # Hz
    p: np.ndarray       # W

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=int)
        self.f = np.where(self.alpha == 1, np.asarray(self.f, dtype=float), 0.0)
        self.p = np.where(self.alpha == 1, np.asarray(self.p, dtype=float), 0.0)

    @property
    def selected(self) -> list[int]:
        return [int(n) for n in np.flatnonzero(self.alpha)]

    def without(self, drop) -> "RoundAction":
        alpha = self.alpha.copy()
        alpha[list(drop)] = 0
        return RoundAction(alpha, self.f, self.p)

    def copy(self) -> "RoundAction":
        return RoundAction(self.alpha.copy(), self.f.copy(), self.p.copy())


@dataclass
class RoundPlan:
    assoc: dict[int, list[int]]     # server -> clients
    bw: dict[int, float]            # client -> fraction of its server's band

    def server_of(self) -> dict[int, int]:
        return {n: k for k, members in self.assoc.items() for n in members}

    def check(self, selected, tol: float = 1e-12):
        seen = [n for members in self.assoc.values() for n in members]
        if len(seen) != len(set(seen)):
            raise ValueError("association sets overlap")
        if set(seen) != set(selected):
            raise ValueError("association does not cover the selection")
        if set(self.bw) != set(seen):
            raise ValueError("bandwidth defined for non-associated clients")
        for k, members in self.assoc.items():
            if members and abs(sum(self.bw[n] for n in members) - 1.0) > tol:
                raise ValueError(f"bandwidth of server {k} does not sum to 1")


@dataclass
class RoundOutcome:
    t_cmp: np.ndarray
    t_com: np.ndarray
    e_cmp: np.ndarray
    e_com: np.ndarray
    server_delay: np.ndarray
    T: float
    objective: float
    n_selected: int
    violations: list = field(default_factory=list)

    @property
    def t_on(self) -> np.ndarray:
        return self.t_cmp + self.t_com


def cmp_latency(alpha, cfg: SystemConfig, c_n: float, f: float) -> float:
    if not alpha:
        return 0.0
    if f <= 0:
        raise InvalidAction("selected client with zero CPU frequency")
    return cfg.R2 * c_n * cfg.M * cfg.beta / f


def cmp_energy(t_cmp: float, u_n: float, f: float) -> float:
    return u_n * f ** 3 * t_cmp


def spectral_efficiency(p: float, h: float, psi: float) -> float:
    return math.log2(1.0 + p * h / psi)


def tx_rate(b: float, B: float, p: float, h: float, psi: float) -> float:
    return b * B * spectral_efficiency(p, h, psi)


def com_latency(alpha, zeta: float, rate: float) -> float:
    if not alpha:
        return 0.0
    if rate <= 0:
        raise InvalidAction("selected client with zero uplink rate")
    return zeta / rate


def com_energy(p: float, t_com: float) -> float:
    return p * t_com


def full_band_time(cfg: SystemConfig, p: float, h: float) -> float:
    """Upload time at the whole server band; com latency is this divided by b."""
    se = spectral_efficiency(p, h, cfg.psi)
    if se <= 0:
        return math.inf
    return cfg.zeta / (cfg.B * se)


def evaluate_round(action: RoundAction, plan: RoundPlan, channels, clients,
                   cfg: SystemConfig) -> RoundOutcome:
    N = len(clients)
    t_cmp = np.zeros(N)
    t_com = np.zeros(N)
    e_cmp = np.zeros(N)
    e_com = np.zeros(N)
    server_delay = np.zeros(cfg.K)
    for k, members in plan.assoc.items():
        for n in members:
            if not action.alpha[n]:
                raise ValueError(f"client {n} associated but not selected")
            c = clients[n]
            t_cmp[n] = cmp_latency(1, cfg, c.c_n, action.f[n])
            e_cmp[n] = cmp_energy(t_cmp[n], c.u_n, action.f[n])
            rate = tx_rate(plan.bw[n], cfg.B, action.p[n], channels[n, k], cfg.psi)
            t_com[n] = com_latency(1, cfg.zeta, rate)
            e_com[n] = com_energy(action.p[n], t_com[n])
            server_delay[k] = max(server_delay[k], t_cmp[n] + t_com[n] + cfg.T_e)
    T = float(server_delay.max()) if cfg.K else 0.0
    n_sel = sum(len(m) for m in plan.assoc.values())
    return RoundOutcome(t_cmp, t_com, e_cmp, e_com, server_delay, T,
                        cfg.lam * n_sel - T, n_sel)


def check_feasibility(action: RoundAction, outcome: RoundOutcome, clients,
                      harvested_on, t: int, F: int) -> list[tuple[int, str]]:
    """Per-client violation flags.

    ``"energy"``: a selected client spends more than it stored plus harvested.
    ``"staleness"``: a client due for selection was skipped.
    """
    out = []
    for n, c in enumerate(clients):
        if action.alpha[n]:
            demand = outcome.e_cmp[n] + outcome.e_com[n]
            if c.battery + harvested_on[n] < demand:
                out.append((n, "energy"))
        elif t - c.tau >= F:
            out.append((n, "staleness"))
    return out


def cloud_delay(round_delays, T_g: float, R1: int | None = None) -> float:
    if R1 is not None and len(round_delays) != R1:
        raise ValueError(f"expected {R1} round delays, got {len(round_delays)}")
    return float(sum(round_delays)) + T_g


def utility(objectives, cfg: SystemConfig) -> float:
    if len(objectives) != cfg.R * cfg.R1:
        raise ValueError(f"expected {cfg.R * cfg.R1} objectives, got {len(objectives)}")
    return float(sum(objectives)) - cfg.R * cfg.T_g
