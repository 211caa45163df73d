"""Desk-scale simulator for the two private training protocols.

Both protocols train logistic regression on a synthetic, hermetically
generated dataset.  The random-walk protocol moves a single model token
over the graph, running K clipped noisy gradient steps at each host; the
correlated-noise protocol updates all users in parallel, each injecting
pair-cancelling noise shared with its neighbors plus independent noise,
followed by one gossip averaging step.  Runs are deterministic given the
seed, which lets the test suite compare empirical walk statistics against
the analytic hitting-time machinery.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import WalkDpError
from .graphs import GraphSpec, TransitionMatrix


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    eta: float
    clip: float
    seed: int
    steps_per_round: int = 1
    sigma: float = 0.0
    sigma_dp: float = 0.0
    sigma_cor: float = 0.0
    batch: int = 1
    start_node: int = 0
    dim: int = 5
    eval_every: int = 100
    cap_contributions: int | None = None

    def __post_init__(self):
        if self.horizon < 1 or self.steps_per_round < 1 or self.batch < 1:
            raise WalkDpError("horizon, K, and batch must be positive")
        if self.eta <= 0 or self.clip < 0:
            raise WalkDpError("need eta > 0 and clip >= 0")
        if min(self.sigma, self.sigma_dp, self.sigma_cor) < 0:
            raise WalkDpError("noise levels must be nonnegative")


@dataclass(frozen=True)
class RunMetrics:
    steps: np.ndarray
    objective: np.ndarray
    accuracy: np.ndarray
    visit_counts: np.ndarray
    params_hash: str
    noise_imbalance: float = 0.0  # max over rounds of correlated-noise residual

    def to_dict(self) -> dict:
        return {
            "steps": [int(s) for s in self.steps],
            "objective": [float(x) for x in self.objective],
            "accuracy": [float(x) for x in self.accuracy],
            "visit_counts": [int(c) for c in self.visit_counts],
            "params_hash": self.params_hash,
            "noise_imbalance": float(self.noise_imbalance),
        }


@dataclass(frozen=True)
class Dataset:
    features: list[np.ndarray]  # per-user training shards
    labels: list[np.ndarray]
    test_features: np.ndarray
    test_labels: np.ndarray

    @property
    def n_users(self) -> int:
        return len(self.features)


def synth_logreg_data(n_users: int, per_user: int, dim: int, seed: int) -> Dataset:
    """Linearly separable binary data with label noise, norm-capped features.

    A random direction defines the labels; ten percent of them are flipped.
    Feature vectors are scaled into the unit ball, and a global 80/20
    train/test split is applied before the training rows are dealt round
    robin to the users.
    """
    if n_users < 1 or per_user < 1 or dim < 1:
        raise WalkDpError("n_users, per_user, dim must be positive")
    rng = np.random.default_rng(seed)
    total = math.ceil(n_users * per_user / 0.8)
    x = rng.normal(size=(total, dim))
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    x = x * np.where(norms > 1.0, (1.0 - 1e-12) / norms, 1.0)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    margin = x @ direction + 0.05 * rng.normal(size=total)
    y = (margin > 0).astype(float)
    flip = rng.random(total) < 0.1
    y[flip] = 1.0 - y[flip]

    n_train = n_users * per_user
    feats, labs = [], []
    for u in range(n_users):
        sl = slice(u * per_user, (u + 1) * per_user)
        feats.append(x[sl].copy())
        labs.append(y[sl].copy())
    return Dataset(
        features=feats,
        labels=labs,
        test_features=x[n_train:].copy(),
        test_labels=y[n_train:].copy(),
    )


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_objective(theta: np.ndarray, data: Dataset) -> float:
    x = np.vstack(data.features)
    y = np.concatenate(data.labels)
    z = x @ theta
    # mean of log(1 + e^{-z y_pm}) with y_pm in {-1, +1}
    y_pm = 2.0 * y - 1.0
    m = -z * y_pm
    return float(np.mean(np.logaddexp(0.0, m)))


def test_accuracy(theta: np.ndarray, data: Dataset) -> float:
    pred = (data.test_features @ theta > 0).astype(float)
    return float(np.mean(pred == data.test_labels))


def _clipped_mean_grad(
    theta: np.ndarray, x: np.ndarray, y: np.ndarray, clip: float
) -> np.ndarray:
    """Per-sample gradients clipped to the sensitivity norm, then averaged."""
    z = x @ theta
    residual = _sigmoid(z) - y
    grads = residual[:, None] * x
    norms = np.linalg.norm(grads, axis=1, keepdims=True)
    scale = np.minimum(1.0, clip / np.maximum(norms, 1e-300))
    return np.mean(grads * scale, axis=0)


def _digest(theta: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(theta).tobytes()).hexdigest()[:16]


def run_walk_dpsgd(w: TransitionMatrix, cfg: SimConfig, data: Dataset) -> RunMetrics:
    """Single-token random-walk training with K local noisy steps per round."""
    n = w.n
    if data.n_users != n:
        raise WalkDpError(f"dataset has {data.n_users} shards for {n} nodes")
    for shard in data.features:
        if len(shard) == 0:
            raise WalkDpError("empty user shard")
    rng = np.random.default_rng(cfg.seed)
    theta = np.zeros(cfg.dim)
    cumw = np.cumsum(w.matrix, axis=1)
    cumw[:, -1] = 1.0

    node = cfg.start_node
    visits = np.zeros(n, dtype=np.int64)
    steps, objs, accs = [], [], []
    for t in range(cfg.horizon):
        visits[node] += 1
        contribute = (
            cfg.cap_contributions is None or visits[node] <= cfg.cap_contributions
        )
        x, y = data.features[node], data.labels[node]
        for _ in range(cfg.steps_per_round):
            if contribute:
                take = rng.choice(len(x), size=min(cfg.batch, len(x)), replace=False)
                grad = _clipped_mean_grad(theta, x[take], y[take], cfg.clip)
            else:
                grad = np.zeros(cfg.dim)  # capped node only adds noise
            noise = cfg.sigma * rng.normal(size=cfg.dim)
            theta = theta - cfg.eta * (grad + noise)
        node = int(np.searchsorted(cumw[node], rng.random(), side="right"))
        if (t + 1) % cfg.eval_every == 0 or t == cfg.horizon - 1:
            steps.append(t + 1)
            objs.append(logistic_objective(theta, data))
            accs.append(test_accuracy(theta, data))
    return RunMetrics(
        steps=np.array(steps),
        objective=np.array(objs),
        accuracy=np.array(accs),
        visit_counts=visits,
        params_hash=_digest(theta),
    )


def run_decor(
    w: TransitionMatrix, spec: GraphSpec, cfg: SimConfig, data: Dataset
) -> RunMetrics:
    """Parallel gossip training with pair-cancelling correlated noise.

    Each undirected edge draws one Gaussian per round; the two endpoints
    add it with opposite signs, so the network-wide injected correlated
    noise sums to zero exactly.
    """
    n = w.n
    if data.n_users != n:
        raise WalkDpError(f"dataset has {data.n_users} shards for {n} nodes")
    rng = np.random.default_rng(cfg.seed)
    thetas = np.zeros((n, cfg.dim))
    edges = list(spec.edges)
    steps, objs, accs = [], [], []
    worst_imbalance = 0.0
    for t in range(cfg.horizon):
        noise = np.zeros((n, cfg.dim))
        for (i, j) in edges:
            z = cfg.sigma_cor * rng.normal(size=cfg.dim)
            noise[i] += z
            noise[j] -= z
        worst_imbalance = max(worst_imbalance, float(np.max(np.abs(noise.sum(axis=0)))))
        grads = np.empty((n, cfg.dim))
        for i in range(n):
            x, y = data.features[i], data.labels[i]
            take = rng.choice(len(x), size=min(cfg.batch, len(x)), replace=False)
            grads[i] = _clipped_mean_grad(thetas[i], x[take], y[take], cfg.clip)
        tilde = grads + noise + cfg.sigma_dp * rng.normal(size=(n, cfg.dim))
        half = thetas - cfg.eta * tilde
        thetas = w.matrix @ half
        if (t + 1) % cfg.eval_every == 0 or t == cfg.horizon - 1:
            mean_theta = thetas.mean(axis=0)
            steps.append(t + 1)
            objs.append(logistic_objective(mean_theta, data))
            accs.append(test_accuracy(mean_theta, data))
    return RunMetrics(
        steps=np.array(steps),
        objective=np.array(objs),
        accuracy=np.array(accs),
        visit_counts=np.full(n, cfg.horizon, dtype=np.int64),
        params_hash=_digest(thetas),
        noise_imbalance=worst_imbalance,
    )


def metrics_to_csv(metrics: RunMetrics, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "objective", "accuracy"])
        for s, o, a in zip(metrics.steps, metrics.objective, metrics.accuracy):
            writer.writerow([int(s), repr(float(o)), repr(float(a))])
