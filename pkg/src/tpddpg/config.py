"""System configuration and seeded random streams.

Config files are INI-style: ``[section]`` headers followed by ``key = value``
lines. Section names only group keys for readability; every key is unique
across sections. Ranges are written as two comma-separated numbers.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Raised for unparsable config files or invariant violations."""


@dataclass(frozen=True)
class SystemConfig:
    # topology
    K: int = 3                      # edge servers
    N: int = 10                     # clients
    area_radius: float = 250.0      # m
    # radio
    B: float = 1e6                  # Hz per edge server
    p_max: float = 1.0              # W
    psi: float = 1e-9               # W, receiver noise
    zeta: float = 1.6e6             # bits, 0.2 MB uploaded model
    # computation
    f_max: float = 3e9              # Hz
    c_n_range: tuple[float, float] = (30.0, 100.0)  # cycles/bit
    u_n: float = 2e-28
    M: int = 32                     # SGD batch
    beta: float = 6272.0            # bits per sample (28x28x8)
    # energy
    E_max: float = 5.0              # J
    e_h_range: tuple[float, float] = (0.2, 1.0)     # J/s
    # protocol
    R: int = 150
    R1: int = 5
    R2: int = 100
    T_e: float = 0.1                # s
    T_g: float = 1.0                # s
    F: int = 3
    xi: int = 5
    lam: float = 0.35
    # reward
    c_reward: float = 5.0
    phi_penalty: float = 5000.0
    # ddpg
    gamma: float = 0.99
    M_prime: int = 32
    replay_capacity: int = 40000
    lr_actor: float = 1e-4
    lr_critic: float = 2e-4
    phi_soft: float = 0.005
    hidden: int = 128
    reward_scale: float = 1e-3      # critic sees reward * reward_scale
    noise_start: float = 0.3
    noise_end: float = 0.05
    bw_tol: float = 1e-9            # s, bisection tolerance
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = ["area_radius", "B", "p_max", "psi", "zeta", "f_max", "u_n",
                    "M", "beta", "E_max", "R", "R1", "R2", "T_e", "T_g", "lam",
                    "M_prime", "replay_capacity", "lr_actor", "lr_critic",
                    "hidden", "reward_scale", "bw_tol"]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("c_n_range", "e_h_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must be in (0, 1]")
        if not 0 < self.phi_soft <= 1:
            raise ConfigError("phi_soft must be in (0, 1]")
        if self.K < 1:
            raise ConfigError("K >= 1 violated")
        if self.N < self.K:
            raise ConfigError("N >= K violated")
        if self.F < 1:
            raise ConfigError("F >= 1 violated")
        if self.xi < 1:
            raise ConfigError("xi >= 1 violated")
        if self.c_reward < 0 or self.phi_penalty < 0:
            raise ConfigError("reward constants must be >= 0")
        if self.noise_start < 0 or self.noise_end < 0:
            raise ConfigError("exploration noise must be >= 0")

    @property
    def rounds(self) -> int:
        """Edge rounds per FL task (one episode)."""
        return self.R * self.R1

    @property
    def state_dim(self) -> int:
        return self.N * (self.K + 3)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


SECTIONS = {
    "topology": ["K", "N", "area_radius"],
    "radio": ["B", "p_max", "psi", "zeta"],
    "computation": ["f_max", "c_n_range", "u_n", "M", "beta"],
    "energy": ["E_max", "e_h_range"],
    "protocol": ["R", "R1", "R2", "T_e", "T_g", "F", "xi", "lam"],
    "reward": ["c_reward", "phi_penalty"],
    "ddpg": ["gamma", "M_prime", "replay_capacity", "lr_actor", "lr_critic",
             "phi_soft", "hidden", "reward_scale", "noise_start", "noise_end"],
    "misc": ["bw_tol", "seed"],
}

ALIASES = {"lambda": "lam"}

_FIELD_TYPES = {f.name: f.default for f in fields(SystemConfig)}


def _parse_value(key: str, text: str):
    default = _FIELD_TYPES[key]
    text = text.strip()
    try:
        if isinstance(default, tuple):
            parts = [float(p) for p in text.replace("[", "").replace("]", "").split(",")]
            if len(parts) != 2:
                raise ValueError("expected two values")
            return tuple(parts)
        if isinstance(default, int):
            value = float(text)
            if value != int(value):
                raise ValueError("expected an integer")
            return int(value)
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {text!r} ({exc})") from None


def parse_overrides(pairs: dict[str, str]) -> dict:
    """Turn raw ``key -> text`` pairs into typed SystemConfig overrides."""
    out = {}
    for raw_key, text in pairs.items():
        key = ALIASES.get(raw_key, raw_key)
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {raw_key!r}")
        out[key] = _parse_value(key, text)
    return out


def load_config(path, overrides: dict[str, str] | None = None) -> SystemConfig:
    """Read a config file on top of the defaults; ``overrides`` win over the file."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    try:
        text = Path(path).read_text()
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"parse error at line {exc.lineno}: key outside a [section]") from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"parse error at line {lineno}: {line.strip()!r}") from None
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from None
    pairs = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in pairs:
                raise ConfigError(f"duplicate key {key!r}")
            pairs[key] = value
    pairs.update(overrides or {})
    return SystemConfig(**parse_overrides(pairs))


def dump_config(cfg: SystemConfig) -> str:
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                text = ", ".join(repr(float(v)) for v in value)
            else:
                text = repr(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


def spawn_stream(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator addressed by ``(master_seed, label)``."""
    seed = int(master_seed) % 2**64
    entropy = [seed & 0xFFFFFFFF, seed >> 32, *label.encode()]
    return np.random.default_rng(np.random.SeedSequence(entropy))


__all__ = ["SystemConfig", "ConfigError", "load_config", "dump_config",
           "parse_overrides", "spawn_stream", "SECTIONS"]
