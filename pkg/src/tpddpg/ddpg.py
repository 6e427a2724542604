"""Phase-1 agent: DDPG over client selection, CPU frequency and transmit power."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SystemConfig
from .cost_model import RoundAction
from .environment import staleness
from .nn import Adam, Mlp

CHECKPOINT_VERSION = 1


class EmptyBatch(ValueError):
    pass


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    @property
    def full(self) -> bool:
        return self.size == self.capacity

    def add(self, s, a, r, s2, done=False):
        i = self.cursor
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if self.size == 0:
            raise EmptyBatch("replay buffer is empty")
        idx = rng.choice(self.size, size=min(batch_size, self.size), replace=False)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx])


def actor_forward(actor: Mlp, s) -> np.ndarray:
    return actor(s)


def decode_action(raw, clients, t: int, cfg: SystemConfig) -> RoundAction:
    """Map actor output in [-1, 1]^{3N} to a bounded RoundAction.

    Layout: selection scores, then CPU scores, then power scores. A client
    whose staleness has reached F is selected regardless of its score.
    """
    N = len(clients)
    raw = np.clip(np.asarray(raw, dtype=float)[:3 * N], -1.0, 1.0)
    alpha = (raw[:N] > 0).astype(int)
    alpha[staleness(clients, t, cfg.F) >= cfg.F] = 1
    f_max = np.array([c.f_max for c in clients])
    p_max = np.array([c.p_max for c in clients])
    f = f_max * (raw[N:2 * N] + 1) / 2
    p = p_max * (raw[2 * N:3 * N] + 1) / 2
    return RoundAction(alpha, f, p)


def reward(objective: float, violated: bool, cfg: SystemConfig) -> float:
    return math.exp(cfg.c_reward + objective) - (cfg.phi_penalty if violated else 0.0)


def soft_update(online, target, phi_soft: float):
    """Blend online parameters into target parameters; returns the new target list."""
    if len(online) != len(target):
        raise ValueError("parameter lists differ in length")
    out = []
    for p, q in zip(online, target):
        if p.shape != q.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
        out.append(phi_soft * p + (1.0 - phi_soft) * q)
    return out


class AgentBundle:
    """Online and target actor/critic networks with their optimizers."""

    def __init__(self, state_dim: int, action_dim: int, hidden=(128, 128),
                 lr_actor: float = 1e-4, lr_critic: float = 2e-4,
                 rng: np.random.Generator | None = None, policy_critic: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.state_dim, self.action_dim = state_dim, action_dim
        self.actor = Mlp([state_dim, *hidden, action_dim], "tanh", rng, final_scale=0.01)
        self.critic = Mlp([state_dim + action_dim, *hidden, 1], "linear", rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, lr_actor)
        self.critic_opt = Adam(self.critic.params, lr_critic)
        # evaluate the critic at pi(s) rather than the stored action in the loss
        self.policy_critic = policy_critic
        self.updates = 0

    @classmethod
    def for_config(cls, cfg: SystemConfig, action_dim: int, rng, **kw) -> "AgentBundle":
        return cls(cfg.state_dim, action_dim, (cfg.hidden, cfg.hidden),
                   cfg.lr_actor, cfg.lr_critic, rng, **kw)

    def act(self, s) -> np.ndarray:
        return self.actor(s)[0]

    def update(self, batch: Batch, cfg: SystemConfig):
        loss, c_grads = critic_loss(batch, self, cfg.gamma)
        self.critic_opt.step(self.critic.params, c_grads)
        J, a_grads = actor_objective(batch, self)
        # Adam descends, so hand it the negated ascent direction
        self.actor_opt.step(self.actor.params, [-g for g in a_grads])
        self.actor_target.params = soft_update(self.actor.params, self.actor_target.params,
                                               cfg.phi_soft)
        self.critic_target.params = soft_update(self.critic.params, self.critic_target.params,
                                                cfg.phi_soft)
        self.updates += 1
        return loss, J

    def to_dict(self) -> dict:
        return {"state_dim": self.state_dim, "action_dim": self.action_dim,
                "actor": self.actor.to_dict(), "critic": self.critic.to_dict(),
                "actor_target": self.actor_target.to_dict(),
                "critic_target": self.critic_target.to_dict(),
                "actor_opt": self.actor_opt.to_dict(), "critic_opt": self.critic_opt.to_dict(),
                "policy_critic": self.policy_critic, "updates": self.updates}

    @classmethod
    def from_dict(cls, d) -> "AgentBundle":
        agent = cls.__new__(cls)
        agent.state_dim, agent.action_dim = d["state_dim"], d["action_dim"]
        agent.actor = Mlp.from_dict(d["actor"])
        agent.critic = Mlp.from_dict(d["critic"])
        agent.actor_target = Mlp.from_dict(d["actor_target"])
        agent.critic_target = Mlp.from_dict(d["critic_target"])
        agent.actor_opt = Adam.from_dict(d["actor_opt"])
        agent.critic_opt = Adam.from_dict(d["critic_opt"])
        agent.policy_critic = d["policy_critic"]
        agent.updates = d["updates"]
        return agent


def td_targets(batch: Batch, bundle: AgentBundle, gamma: float) -> np.ndarray:
    a2 = bundle.actor_target(batch.s2)
    q2 = bundle.critic_target(np.hstack([batch.s2, a2]))[:, 0]
    return batch.r + gamma * (1.0 - batch.done) * q2


def critic_loss(batch: Batch, bundle: AgentBundle, gamma: float):
    """Mean squared TD error and its gradient w.r.t. the online critic."""
    if len(batch) == 0:
        raise EmptyBatch("empty batch")
    y = td_targets(batch, bundle, gamma)
    a = bundle.actor(batch.s) if bundle.policy_critic else batch.a
    q, cache = bundle.critic.forward(np.hstack([batch.s, a]))
    err = y - q[:, 0]
    loss = float(np.mean(err ** 2))
    dq = (-2.0 * err / len(batch))[:, None]
    grads, _ = bundle.critic.backward(cache, dq)
    return loss, grads


def actor_objective(batch: Batch, bundle: AgentBundle):
    """Mean Q(s, pi(s)) and its gradient w.r.t. the online actor (ascent direction)."""
    if len(batch) == 0:
        raise EmptyBatch("empty batch")
    a, a_cache = bundle.actor.forward(batch.s)
    q, c_cache = bundle.critic.forward(np.hstack([batch.s, a]))
    J = float(q.mean())
    _, dx = bundle.critic.backward(c_cache, np.full_like(q, 1.0 / len(batch)))
    da = dx[:, bundle.state_dim:]
    grads, _ = bundle.actor.backward(a_cache, da)
    return J, grads


def noise_sigma(episode: int, total_episodes: int, cfg: SystemConfig) -> float:
    """Linear decay from noise_start to noise_end over the first half of training."""
    half = max(total_episodes / 2, 1)
    frac = min(episode / half, 1.0)
    return cfg.noise_start + frac * (cfg.noise_end - cfg.noise_start)


def save_checkpoint(path, bundle: AgentBundle, extra: dict | None = None):
    doc = {"version": CHECKPOINT_VERSION, "agent": bundle.to_dict(), **(extra or {})}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    return AgentBundle.from_dict(doc["agent"]), doc


def train_episode(sim, bundle: AgentBundle, buffer: ReplayBuffer, cfg: SystemConfig,
                  rng: np.random.Generator | None = None, episode: int = 0,
                  total_episodes: int = 1, learn: bool = True):
    """One FL task of R*R1 edge rounds under the TP-DDPG scheduler."""
    from .baselines import TPDDPGScheduler

    scheduler = TPDDPGScheduler(bundle, buffer, learn=learn, explore=learn)
    if rng is not None:
        scheduler.rng_noise = rng
    return sim.run_episode(scheduler, episode=episode, total_episodes=total_episodes)
