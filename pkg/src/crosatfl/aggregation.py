"""Model vectors, weighted aggregation, random-k cross-cluster mixing, and
the desk-scale local trainers.

Cross-aggregation is synchronous gossip: every master snapshots the round's
cluster models, samples up to k_nbr reachable peers, and replaces its model
with the sample-count-weighted average of its mixing group, all against the
immutable snapshot. Cluster sample counts are static (skipped members still
count; their data still exists).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

DEFAULT_BITS_PER_PARAM = 32


@dataclass(frozen=True, eq=False)
class ModelVector:
    """Flat parameter vector plus its on-the-wire size in bits."""

    weights: np.ndarray
    wire_bits: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)):
            raise ValueError("model weights must be finite")
        if self.wire_bits <= 0:
            raise ValueError("wire_bits must be positive")

    @classmethod
    def zeros(cls, dim: int, bits_per_param: int = DEFAULT_BITS_PER_PARAM) -> "ModelVector":
        return cls(weights=np.zeros(dim), wire_bits=float(dim * bits_per_param))

    def with_weights(self, weights: np.ndarray) -> "ModelVector":
        return ModelVector(weights=weights, wire_bits=self.wire_bits)


@dataclass(frozen=True)
class ClusterModel:
    cluster_id: int
    model: ModelVector
    n_total: int

    def __post_init__(self) -> None:
        if self.n_total <= 0:
            raise ValueError("n_total must be positive")


def weighted_average(models: list[ModelVector], weights: list[float]) -> ModelVector:
    """Convex combination of model vectors with weights proportional to the
    given non-negative coefficients."""
    if not models or len(models) != len(weights):
        raise ValueError("models and weights must be non-empty and equal length")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("weights must be non-negative with positive sum")
    coef = w / w.sum()
    stacked = np.stack([m.weights for m in models])
    return models[0].with_weights(coef @ stacked)


def sample_mixing_group(cluster_id: int, reachable: list[int], k_nbr: int,
                        rng: np.random.Generator) -> list[int]:
    """The mixing group: the cluster itself plus min(k_nbr, |reachable|)
    uniformly sampled reachable peers."""
    if cluster_id in reachable:
        raise ValueError("reachable set must not contain the cluster itself")
    if k_nbr < 0:
        raise ValueError("k_nbr must be >= 0")
    take = min(k_nbr, len(reachable))
    picked = sorted(rng.choice(np.asarray(sorted(reachable)), size=take,
                               replace=False).tolist()) if take else []
    return [cluster_id] + picked


@dataclass(frozen=True)
class MixingRound:
    models: dict[int, ClusterModel]
    groups: dict[int, list[int]]
    transmissions: int


def cross_aggregate_round(models: dict[int, ClusterModel],
                          reachable: dict[int, list[int]], k_nbr: int,
                          rng: np.random.Generator) -> MixingRound:
    """One synchronous random-k gossip round over the round-start snapshot.

    Every cluster's new model is the n-weighted average of its mixing group's
    snapshot models; the transmission count is the number of received peer
    models summed over clusters."""
    snapshot = dict(models)
    updated: dict[int, ClusterModel] = {}
    groups: dict[int, list[int]] = {}
    transmissions = 0
    for cid in sorted(snapshot):
        group = sample_mixing_group(cid, reachable.get(cid, []), k_nbr, rng)
        groups[cid] = group
        transmissions += len(group) - 1
        mixed = weighted_average([snapshot[j].model for j in group],
                                 [float(snapshot[j].n_total) for j in group])
        updated[cid] = replace(snapshot[cid], model=mixed)
    return MixingRound(models=updated, groups=groups, transmissions=transmissions)


def consolidate_final(models: dict[int, ClusterModel]) -> ModelVector:
    """Session-final model: cluster models averaged by their sample counts."""
    ordered = [models[cid] for cid in sorted(models)]
    return weighted_average([m.model for m in ordered],
                            [float(m.n_total) for m in ordered])


# --- model file format ------------------------------------------------------


def save_model(model: ModelVector, path: str) -> None:
    """Little-endian float64, length-prefixed with a uint64."""
    data = np.asarray(model.weights, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", data.size))
        fh.write(data.tobytes())


def load_model(path: str, bits_per_param: int = DEFAULT_BITS_PER_PARAM) -> ModelVector:
    with open(path, "rb") as fh:
        (size,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * size), dtype="<f8")
    if data.size != size:
        raise ValueError("model file truncated")
    return ModelVector(weights=data.copy(), wire_bits=float(size * bits_per_param))


# --- local trainers -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Shard:
    """One satellite's local dataset."""

    features: np.ndarray
    labels: np.ndarray

    @property
    def n(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TrainerSpec:
    """Mini-batch gradient descent settings; kind selects the objective."""

    kind: str = "logistic"            # "logistic" | "quadratic"
    learning_rate: float = 0.05
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("logistic", "quadratic"):
            raise ValueError(f"unknown trainer kind: {self.kind!r}")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate must be > 0 and batch_size >= 1")


def _logistic_grad(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Mean gradient of log(1 + exp(-y * (x @ w))) with y in {-1, +1};
    the last weight is the bias."""
    z = x @ w[:-1] + w[-1]
    s = -y / (1.0 + np.exp(y * z))
    g = np.empty_like(w)
    g[:-1] = x.T @ s / len(y)
    g[-1] = s.mean()
    return g


def logistic_loss(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    z = y * (x @ w[:-1] + w[-1])
    return float(np.mean(np.logaddexp(0.0, -z)))


def logistic_accuracy(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    pred = np.sign(x @ w[:-1] + w[-1])
    pred[pred == 0] = 1.0
    return float(np.mean(pred == y))


def quadratic_loss(w: np.ndarray, x: np.ndarray) -> float:
    return float(0.5 * np.mean(np.sum((x - w) ** 2, axis=1)))


def local_train(model: ModelVector, shard: Shard, spec: TrainerSpec,
                epochs: int, rng: np.random.Generator) -> ModelVector:
    """Mini-batch gradient descent from the given model over the shard.

    epochs == 0 returns the model unchanged. The rng orders the mini-batches,
    so the same generator state reproduces the same trajectory bit for bit.
    """
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    if epochs == 0 or shard.n == 0:
        return model
    w = model.weights.copy()
    n = shard.n
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            idx = order[start:start + spec.batch_size]
            if spec.kind == "logistic":
                g = _logistic_grad(w, shard.features[idx], shard.labels[idx])
            else:
                g = w - shard.features[idx].mean(axis=0)
            w = w - spec.learning_rate * g
    return model.with_weights(w)


# --- synthetic datasets ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FederatedData:
    shards: dict[int, Shard]
    test: Shard
    dim: int


def make_logistic_data(sat_samples: dict[int, int], n_features: int, seed: int,
                       label_skew: float = 0.0, test_samples: int = 2000) -> FederatedData:
    """Linearly separable two-class data split into per-satellite shards.

    label_skew 0 shards IID; label_skew s in (0, 0.5] gives alternating
    satellites a (1-s)/s class mix, the classic pathological split."""
    if not 0.0 <= label_skew <= 0.5:
        raise ValueError("label_skew must lie in [0, 0.5]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 17]))
    w_true = rng.standard_normal(n_features)
    w_true /= np.linalg.norm(w_true)
    b_true = float(rng.standard_normal() * 0.1)

    def draw(count: int) -> Shard:
        x = rng.standard_normal((count, n_features))
        y = np.where(x @ w_true + b_true > 0, 1.0, -1.0)
        return Shard(features=x, labels=y)

    def draw_class(count: int, positive: bool) -> Shard:
        xs, ys = [], []
        need = count
        while need > 0:
            batch = draw(max(4 * need, 64))
            keep = batch.labels > 0 if positive else batch.labels < 0
            xs.append(batch.features[keep][:need])
            ys.append(batch.labels[keep][:need])
            need -= len(ys[-1])
        return Shard(features=np.concatenate(xs), labels=np.concatenate(ys))

    shards: dict[int, Shard] = {}
    for rank, (sat_id, n) in enumerate(sorted(sat_samples.items())):
        if label_skew == 0.0:
            shards[sat_id] = draw(n)
        else:
            major = 1.0 - label_skew
            n_pos = round(n * (major if rank % 2 == 0 else label_skew))
            pos = draw_class(n_pos, positive=True)
            neg = draw_class(n - n_pos, positive=False)
            perm = rng.permutation(n)
            shards[sat_id] = Shard(
                features=np.concatenate([pos.features, neg.features])[perm],
                labels=np.concatenate([pos.labels, neg.labels])[perm])
    return FederatedData(shards=shards, test=draw(test_samples), dim=n_features + 1)


def make_quadratic_data(sat_samples: dict[int, int], n_features: int, seed: int,
                        spread: float = 1.0, noise: float = 0.2,
                        test_samples: int = 500) -> FederatedData:
    """Per-satellite point clouds around satellite-specific targets; the
    quadratic objective pulls a model toward the pooled mean."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 23]))
    shards: dict[int, Shard] = {}
    for sat_id, n in sorted(sat_samples.items()):
        target = rng.standard_normal(n_features) * spread
        x = target + rng.standard_normal((n, n_features)) * noise
        shards[sat_id] = Shard(features=x, labels=np.zeros(n))
    test = Shard(features=rng.standard_normal((test_samples, n_features)) * spread,
                 labels=np.zeros(test_samples))
    return FederatedData(shards=shards, test=test, dim=n_features)
