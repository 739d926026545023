"""Training objectives: neighborhood affinity, non-neighbor separation, CE.

The affinity score of a node is the mean cosine similarity between its final
embedding and its neighbors' embeddings; isolated nodes carry score 0 and an
invalid flag. The self-supervised objective pushes affinity up while a
sampled non-neighbor regularizer pushes similarity to non-adjacent nodes
down. The supervised objective adds binary cross-entropy and a class-weighted
variant of the non-neighbor term that separates anomalies harder.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import diffkernel as dk
from .errors import ConfigError, DataError, ShapeError

__all__ = [
    "LossWeights", "AffinityScores", "affinity_scores", "affinity_margin",
    "sample_nonneighbors", "anomaly_weights", "nonneighbor_reg",
    "self_supervised_loss", "supervised_loss", "train_loss",
    "train_loss_parts", "ttt_loss",
]


@dataclass
class LossWeights:
    """Scalar weights of the composite objectives.

    ``anomaly_weight`` may be the string "auto", resolved to
    1 / anomaly_rate of the labeled graph at use time.
    """

    self_weight: float = 0.001
    nonneighbor_weight: float = 0.1
    class_reg_weight: float = 0.001
    anomaly_weight: float | str = 20.0
    neg_samples_k: int = 5

    def validate(self):
        for name in ("self_weight", "nonneighbor_weight", "class_reg_weight"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if isinstance(self.anomaly_weight, str):
            if self.anomaly_weight != "auto":
                raise ConfigError("anomaly_weight must be a number or 'auto'")
        elif self.anomaly_weight < 1:
            raise ConfigError("anomaly_weight must be at least 1")
        if self.neg_samples_k < 1:
            raise ConfigError("neg_samples_k must be at least 1")
        return self


def anomaly_weights(labels, anomaly_weight):
    """Per-node weight vector: ``anomaly_weight`` for anomalies, 1 otherwise."""
    labels = np.asarray(labels)
    if anomaly_weight == "auto":
        rate = float(labels.mean()) if labels.size else 0.0
        anomaly_weight = 1.0 / rate if rate > 0 else 1.0
    return np.where(labels == 1, float(anomaly_weight), 1.0)


@dataclass
class AffinityScores:
    """Per-node neighborhood affinity; ``valid`` is False at isolated nodes."""

    scores: dk.Tensor
    valid: np.ndarray

    def values(self):
        return self.scores.values[:, 0]


def affinity_scores(h, graph):
    """Mean cosine similarity of each node's embedding to its neighbors'."""
    if h.shape[0] != graph.num_nodes:
        raise ShapeError("embedding rows must match graph nodes")
    h_src = dk.gather_rows(h, graph.slot_src)
    h_dst = dk.gather_rows(h, graph.indices)
    sims = dk.cosine_rows(h_src, h_dst)
    scores = dk.segment_mean(sims, graph.indptr)
    return AffinityScores(scores=scores, valid=graph.degrees > 0)


def affinity_margin(score_values, valid, labels):
    """Mean affinity of normal nodes minus mean affinity of anomalies.

    Only non-isolated nodes count; raises if either class has none.
    """
    labels = np.asarray(labels)
    normal = valid & (labels == 0)
    anomalous = valid & (labels == 1)
    if not normal.any() or not anomalous.any():
        raise DataError("margin needs non-isolated nodes of both classes")
    return float(score_values[normal].mean() - score_values[anomalous].mean())


# ---------------------------------------------------------------------------
# Non-neighbor sampling


@dataclass
class NonneighborSample:
    """Flat per-node sample arrays: segment i covers node i's draws."""

    src: np.ndarray
    dst: np.ndarray
    indptr: np.ndarray
    num_sampled_nodes: int
    skipped: np.ndarray = field(repr=False, default=None)


def _edge_member(graph, src_ids, cand):
    keys = src_ids * np.int64(graph.num_nodes) + cand
    table = graph.slot_keys
    pos = np.searchsorted(table, keys)
    inside = pos < table.size
    hit = np.zeros(keys.size, dtype=bool)
    if inside.any():
        hit[inside] = table[pos[inside]] == keys[inside]
    return hit


def sample_nonneighbors(graph, k, rng):
    """Draw up to k distinct uniform non-neighbors for every node.

    Nodes adjacent to everything else have no non-neighbor and are skipped
    (with a warning). Nodes with fewer than k non-neighbors use all of them.
    Processing iid uniform candidates in draw order and keeping the first k
    distinct valid ones is exactly uniform sampling without replacement.
    """
    n = graph.num_nodes
    if k < 1:
        raise ConfigError("neg_samples_k must be at least 1")
    avail = n - 1 - graph.degrees
    skipped = avail <= 0
    if skipped.any():
        warnings.warn(f"{int(skipped.sum())} node(s) have no non-neighbor; skipped",
                      stacklevel=2)
    take = np.minimum(k, np.maximum(avail, 0)).astype(np.int64)
    taken = np.full((n, k), -1, dtype=np.int64)
    count = np.zeros(n, dtype=np.int64)

    for _ in range(64):
        active = np.flatnonzero(count < take)
        if active.size == 0:
            break
        cand = rng.integers(0, n, size=(active.size, k))
        for j in range(k):
            c = cand[:, j]
            ok = (c != active) & (count[active] < take[active])
            ok &= ~_edge_member(graph, active, c)
            for t in range(k):
                ok &= taken[active, t] != c
            rows = active[ok]
            taken[rows, count[rows]] = c[ok]
            count[rows] += 1

    leftovers = np.flatnonzero(count < take)
    for i in leftovers:
        row = graph.indices[graph.indptr[i]:graph.indptr[i + 1]]
        banned = np.concatenate([row, [i], taken[i, :count[i]]])
        pool = np.setdiff1d(np.arange(n), banned)
        extra = rng.choice(pool, size=take[i] - count[i], replace=False)
        taken[i, count[i]:take[i]] = extra
        count[i] = take[i]

    indptr = np.concatenate([[0], np.cumsum(take)])
    src = np.repeat(np.arange(n, dtype=np.int64), take)
    dst = taken[taken >= 0]
    return NonneighborSample(src=src, dst=dst, indptr=indptr,
                             num_sampled_nodes=int((take > 0).sum()),
                             skipped=skipped)


def _nonneighbor_mean(h, sample, weights):
    """Mean over sampled nodes of the per-node mean (weighted) similarity."""
    if sample.num_sampled_nodes == 0:
        return dk.Tensor(np.zeros((1, 1)))
    h_i = dk.gather_rows(h, sample.src)
    h_j = dk.gather_rows(h, sample.dst)
    sims = dk.cosine_rows(h_i, h_j)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)[sample.dst].reshape(-1, 1)
        sims = dk.elementwise_mul(sims, dk.Tensor(w))
    per_node = dk.segment_mean(sims, sample.indptr)
    return dk.scalar_mul(dk.sum(per_node), 1.0 / sample.num_sampled_nodes)


def nonneighbor_reg(h, graph, rng, k=5, weights=None):
    """Sampled estimate of mean similarity to non-neighbors.

    ``weights`` is an optional per-node vector applied by the sampled
    node's index (class weighting). Samples are redrawn on every call;
    pass the same rng state to reproduce a draw.
    """
    if h.shape[0] != graph.num_nodes:
        raise ShapeError("embedding rows must match graph nodes")
    if weights is not None and np.asarray(weights).shape != (graph.num_nodes,):
        raise ShapeError("weights must have one entry per node")
    sample = sample_nonneighbors(graph, k, rng)
    return _nonneighbor_mean(h, sample, weights)


# ---------------------------------------------------------------------------
# Composite objectives


def self_supervised_loss(h, graph, weights, rng):
    """Negated affinity total plus the non-neighbor regularizer.

    The affinity term sums scores over non-isolated nodes (isolated ones
    contribute zero); the regularizer is weighted by
    ``weights.nonneighbor_weight`` and skipped entirely when that is 0.
    """
    aff = affinity_scores(h, graph)
    total = dk.negate(dk.sum(aff.scores))
    if weights.nonneighbor_weight != 0.0:
        reg = nonneighbor_reg(h, graph, rng, k=weights.neg_samples_k)
        total = dk.add(total, dk.scalar_mul(reg, weights.nonneighbor_weight))
    return total


def supervised_loss(probs, labels, class_reg=None, class_reg_weight=0.0):
    """Mean binary cross-entropy, plus an optional weighted separation term."""
    total = dk.binary_cross_entropy(probs, labels)
    if class_reg is not None and class_reg_weight != 0.0:
        total = dk.add(total, dk.scalar_mul(class_reg, class_reg_weight))
    return total


def train_loss_parts(probs, h, graph, weights, rng):
    """Source objective and its scalar components.

    One non-neighbor draw is shared between the class-weighted separation
    term and the unweighted regularizer (both estimate sums over the same
    index set). Returns (loss tensor, dict of float components).
    """
    if graph.labels is None:
        raise DataError("source training requires labels")
    weights.validate()
    sample = sample_nonneighbors(graph, weights.neg_samples_k, rng)
    w = anomaly_weights(graph.labels, weights.anomaly_weight)
    class_reg = _nonneighbor_mean(h, sample, w)
    plain_reg = _nonneighbor_mean(h, sample, None)

    bce = dk.binary_cross_entropy(probs, graph.labels)
    l_sup = dk.add(bce, dk.scalar_mul(class_reg, weights.class_reg_weight))

    aff = affinity_scores(h, graph)
    l_self = dk.add(dk.negate(dk.sum(aff.scores)),
                    dk.scalar_mul(plain_reg, weights.nonneighbor_weight))

    total = dk.add(l_sup, dk.scalar_mul(l_self, weights.self_weight))
    parts = {
        "loss": total.item(),
        "loss_sup": l_sup.item(),
        "loss_self": l_self.item(),
        "bce": bce.item(),
        "class_reg": class_reg.item(),
        "nonneighbor_reg": plain_reg.item(),
        "affinity_sum": float(aff.scores.values.sum()),
    }
    return total, parts


def train_loss(probs, h, graph, weights, rng):
    """Supervised source objective: CE + class separation + self-supervision."""
    total, _ = train_loss_parts(probs, h, graph, weights, rng)
    return total


def ttt_loss(h, graph, weights, rng):
    """Label-free adaptation objective (the self-supervised term alone)."""
    return self_supervised_loss(h, graph, weights, rng)
