"""Stochastic world: placement, channels, energy arrivals and batteries."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig

MIN_DISTANCE = 1.0  # m; path loss diverges at d -> 0


class EnergyCausalityViolation(RuntimeError):
    """A client was asked to spend more energy than it had."""


@dataclass(frozen=True)
class ClientState:
    id: int
    position: tuple[float, float]
    battery: float
    battery_end_on: float
    harvest_mean: float   # J/s
    c_n: float            # cycles/bit
    u_n: float
    f_max: float
    p_max: float
    tau: int = 0          # round of last selection

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _uniform_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform(size=n))
    theta = rng.uniform(0.0, 2 * np.pi, size=n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta)])


def server_positions(cfg: SystemConfig) -> list[tuple[float, float]]:
    """K servers evenly spaced on a ring of half the deployment radius."""
    if cfg.K == 1:
        return [(0.0, 0.0)]
    ring = cfg.area_radius / 2
    return [(ring * math.cos(2 * math.pi * k / cfg.K), ring * math.sin(2 * math.pi * k / cfg.K))
            for k in range(cfg.K)]


def init_world(cfg: SystemConfig, rng: np.random.Generator):
    pos = _uniform_disk(rng, cfg.N, cfg.area_radius)
    c_n = rng.uniform(*cfg.c_n_range, size=cfg.N)
    harvest = rng.uniform(*cfg.e_h_range, size=cfg.N)
    clients = [
        ClientState(id=n, position=(float(pos[n, 0]), float(pos[n, 1])),
                    battery=cfg.E_max / 2, battery_end_on=cfg.E_max / 2,
                    harvest_mean=float(harvest[n]), c_n=float(c_n[n]), u_n=cfg.u_n,
                    f_max=cfg.f_max, p_max=cfg.p_max, tau=0)
        for n in range(cfg.N)
    ]
    return clients, server_positions(cfg)


def reset_clients(clients: list[ClientState], cfg: SystemConfig) -> list[ClientState]:
    """Start-of-episode state: half-charged batteries, no selection history."""
    return [replace(c, battery=cfg.E_max / 2, battery_end_on=cfg.E_max / 2, tau=0)
            for c in clients]


def distances(clients, servers) -> np.ndarray:
    cp = np.array([c.position for c in clients], dtype=float).reshape(-1, 2)
    sp = np.array(servers, dtype=float).reshape(-1, 2)
    d = np.linalg.norm(cp[:, None, :] - sp[None, :, :], axis=2)
    return np.maximum(d, MIN_DISTANCE)


def path_gain(d_m) -> np.ndarray:
    """Large-scale gain 10^(-PL/10) with PL = 30 log10(d_km) + 72.4 dB."""
    pl_db = 30.0 * np.log10(np.asarray(d_m, dtype=float) / 1000.0) + 72.4
    return 10.0 ** (-pl_db / 10.0)


def draw_channels(clients, servers, rng: np.random.Generator) -> np.ndarray:
    """N x K linear power gains with Rayleigh (unit-mean exponential) fading."""
    d = distances(clients, servers)
    fading = rng.exponential(1.0, size=d.shape)
    # exponential has support (0, inf) but a float draw of exactly 0 is possible
    fading = np.maximum(fading, np.finfo(float).tiny)
    return path_gain(d) * fading


def harvest_energy(harvest_mean: float, duration: float, rng: np.random.Generator) -> float:
    """Energy harvested over ``duration`` seconds, in millijoule quanta.

    Each whole second draws its own Poisson count; a fractional tail of
    length d draws Poisson(rate * d).
    """
    if duration <= 0:
        return 0.0
    whole = int(math.floor(duration))
    tail = duration - whole
    lam = harvest_mean * 1000.0
    total = int(rng.poisson(lam, size=whole).sum()) if whole else 0
    if tail > 0:
        total += int(rng.poisson(lam * tail))
    return total / 1000.0


def apply_round_transition(client: ClientState, e_cmp: float, e_com: float, t_on: float,
                           t_round: float, cloud_round: bool, cfg: SystemConfig,
                           rng: np.random.Generator, e_ho: float | None = None,
                           t: int | None = None) -> ClientState:
    """Battery update over one edge round.

    ``e_ho`` lets the caller pass the on-time harvest it already drew for the
    feasibility gate; otherwise it is drawn here. ``t`` marks the client as
    selected in that round when it spent energy.
    """
    if t_on > t_round + 1e-12:
        raise ValueError("on-time exceeds round duration")
    if e_ho is None:
        e_ho = harvest_energy(client.harvest_mean, t_on, rng)
    spent = e_cmp + e_com
    if client.battery + e_ho < spent - 1e-12:
        raise EnergyCausalityViolation(
            f"client {client.id}: needs {spent:.6g} J, has {client.battery + e_ho:.6g} J")
    end_on = min(max(client.battery + e_ho - spent, 0.0), cfg.E_max)
    e_hi = harvest_energy(client.harvest_mean, max(t_round - t_on, 0.0), rng)
    e_g = harvest_energy(client.harvest_mean, cfg.T_g, rng) if cloud_round else 0.0
    battery = min(end_on + e_hi + e_g, cfg.E_max)
    tau = t if (t is not None and t_on > 0) else client.tau
    return replace(client, battery=battery, battery_end_on=end_on, tau=tau)


def staleness(clients, t: int, F: int) -> np.ndarray:
    return np.minimum(np.array([t - c.tau for c in clients]), F)


def assemble_state(clients, channels: np.ndarray, t: int, F: int) -> np.ndarray:
    """Raw state vector: [E_end_on (N), E_start (N), gains row-major (N*K), staleness (N)]."""
    end_on = np.array([c.battery_end_on for c in clients], dtype=float)
    start = np.array([c.battery for c in clients], dtype=float)
    return np.concatenate([end_on, start, np.asarray(channels, dtype=float).ravel(),
                           staleness(clients, t, F).astype(float)])


@dataclass
class StateNormalizer:
    """Maps raw state vectors to roughly [0, 1] per coordinate."""

    N: int
    K: int
    E_max: float
    F: int
    log_gain_min: float
    log_gain_max: float

    @classmethod
    def calibrate(cls, cfg: SystemConfig, clients, servers, rng, draws: int = 200):
        logs = np.log10(np.concatenate([draw_channels(clients, servers, rng).ravel()
                                        for _ in range(draws)]))
        return cls(cfg.N, cfg.K, cfg.E_max, cfg.F, float(logs.min()), float(logs.max()))

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=float)
        n, nk = self.N, self.N * self.K
        out = np.empty_like(raw)
        out[..., :2 * n] = raw[..., :2 * n] / self.E_max
        span = max(self.log_gain_max - self.log_gain_min, 1e-12)
        out[..., 2 * n:2 * n + nk] = (np.log10(raw[..., 2 * n:2 * n + nk]) - self.log_gain_min) / span
        out[..., 2 * n + nk:] = raw[..., 2 * n + nk:] / self.F
        return out

    def to_dict(self) -> dict:
        return dict(self.__dict__)
