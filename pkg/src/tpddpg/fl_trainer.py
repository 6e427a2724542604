"""Hierarchical FL on synthetic logistic-regression data.

Models are flat vectors ``w`` of length d + 1; the last entry is the bias.
Labels are 0/1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class LocalDataset:
    x: np.ndarray
    y: np.ndarray
    owner: int

    def __post_init__(self):
        if len(self.y) == 0:
            raise ValueError("empty local dataset")

    def __len__(self):
        return len(self.y)


def make_synthetic(n_clients: int, samples: int, rng: np.random.Generator,
                   skew: float = 0.8, spread: float = 0.7) -> list[LocalDataset]:
    """Two Gaussian blobs in 2-D; client n holds mostly label n % 2."""
    centers = np.array([[-2.0, -2.0], [2.0, 2.0]])
    out = []
    for n in range(n_clients):
        major = n % 2
        y = np.where(rng.uniform(size=samples) < skew, major, 1 - major)
        x = centers[y] + spread * rng.standard_normal((samples, 2))
        out.append(LocalDataset(x, y.astype(float), n))
    return out


def _margin(w, x, y):
    return (2 * y - 1) * (x @ w[:-1] + w[-1])


def sample_losses(w, x, y) -> np.ndarray:
    """Per-sample logistic loss log(1 + exp(-m)) with m the signed margin."""
    return np.logaddexp(0.0, -_margin(w, x, y))


def loss_grad(w, x, y) -> np.ndarray:
    m = _margin(w, x, y)
    coef = -(2 * y - 1) * np.exp(-np.logaddexp(0.0, m))   # -(2y-1) * sigmoid(-m)
    g = np.empty_like(w)
    g[:-1] = x.T @ coef / len(y)
    g[-1] = coef.mean()
    return g


def local_sgd(w, data: LocalDataset, eta: float, M: int, steps: int,
              rng: np.random.Generator) -> np.ndarray:
    w = np.array(w, dtype=float)
    batch = min(M, len(data))
    for _ in range(steps):
        idx = rng.choice(len(data), size=batch, replace=False)
        w -= eta * loss_grad(w, data.x[idx], data.y[idx])
    return w


def importance_weight(w_edge, data: LocalDataset) -> float:
    """|D| * sqrt(mean of squared per-sample losses) under the edge model."""
    losses = sample_losses(w_edge, data.x, data.y)
    return float(len(data) * np.sqrt(np.mean(losses ** 2)))


def edge_aggregate(models, weights) -> np.ndarray:
    models = np.asarray(models, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("negative aggregation weight")
    total = weights.sum()
    if total <= 0:
        log.warning("all importance weights are zero; using the unweighted mean")
        return models.mean(axis=0)
    return weights @ models / total


def cloud_aggregate(edge_models, sample_counts) -> np.ndarray:
    """Sample-count weighted mean; servers with zero participants drop out."""
    counts = np.asarray(sample_counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("negative sample count")
    if counts.sum() <= 0:
        raise ValueError("no participating samples in this cloud round")
    keep = counts > 0
    return counts[keep] @ np.asarray(edge_models, dtype=float)[keep] / counts[keep].sum()


def global_loss(w, datasets) -> float:
    total = sum(len(d) for d in datasets)
    return float(sum(len(d) * sample_losses(w, d.x, d.y).mean() for d in datasets) / total)


def accuracy(w, datasets) -> float:
    hits = sum(int(np.sum(_margin(w, d.x, d.y) > 0)) for d in datasets)
    return hits / sum(len(d) for d in datasets)


class HflTrainer:
    """Edge rounds driven by an external association, cloud rounds every R1 edge rounds."""

    def __init__(self, datasets, K: int, R1: int, R2: int, M: int, eta: float,
                 rng: np.random.Generator, weighting: str = "importance"):
        if weighting not in ("importance", "equal"):
            raise ValueError(f"unknown weighting {weighting!r}")
        self.datasets = datasets
        self.K, self.R1, self.R2, self.M, self.eta = K, R1, R2, M, eta
        self.rng = rng
        self.weighting = weighting
        dim = datasets[0].x.shape[1] + 1
        self.global_model = np.zeros(dim)
        self.start_cloud_round()
        self.history = []

    def start_cloud_round(self):
        self.edge_models = [self.global_model.copy() for _ in range(self.K)]
        self.counts = np.zeros(self.K)
        self.edge_rounds = 0

    def edge_round(self, assoc: dict[int, list[int]]):
        for k, members in assoc.items():
            if not members:
                continue
            w_prev = self.edge_models[k]
            weights, models = [], []
            for n in members:
                data = self.datasets[n]
                weights.append(importance_weight(w_prev, data)
                               if self.weighting == "importance" else 1.0)
                models.append(local_sgd(w_prev, data, self.eta, self.M, self.R2, self.rng))
            self.edge_models[k] = edge_aggregate(models, weights)
            self.counts[k] += sum(len(self.datasets[n]) for n in members)
        self.edge_rounds += 1
        if self.edge_rounds == self.R1:
            self.cloud_round()

    def cloud_round(self):
        if self.counts.sum() > 0:
            self.global_model = cloud_aggregate(self.edge_models, self.counts)
        self.history.append((len(self.history) + 1, accuracy(self.global_model, self.datasets),
                             global_loss(self.global_model, self.datasets)))
        self.start_cloud_round()
