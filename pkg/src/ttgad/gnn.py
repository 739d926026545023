"""Encoders, attention-weighted message passing, and the predictor head.

A model bundle holds one projection encoder per domain (source always,
target once adaptation starts), a stack of shared message-passing layers,
and a small MLP head that maps final embeddings to anomaly probabilities.

Attention is computed per directed CSR slot: scores are dot products of
relu-projected endpoint embeddings, softmax-normalized over each node's
neighborhood, then symmetrized with an elementwise min against the reverse
slot. Entries outside the adjacency never exist, so they are exactly zero
with exactly zero gradient.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffkernel as dk
from .errors import ConfigError, ShapeError
from .graphstore import AttributedGraph

__all__ = [
    "ProjectionEncoder", "NsawLayer", "PredictorHead", "ModelBundle",
    "LayerAttention", "AttentionMatrices",
    "project", "compute_attention", "symmetrize_attention",
    "nsaw_layer_forward", "forward_embeddings", "predict",
    "init_encoder", "init_layer", "init_predictor", "init_bundle",
    "capped_graph",
]


@dataclass
class ProjectionEncoder:
    """Linear map from a domain's raw feature space to the shared width.

    ``weight`` is (p, feature_dim); ``None`` means the identity encoder for
    settings where source and target share one feature space.
    """

    weight: dk.Tensor | None
    domain: str

    def project(self, features):
        x = dk.Tensor(features)
        if self.weight is None:
            return x
        if self.weight.shape[1] != x.shape[1]:
            raise ShapeError(
                f"{self.domain} encoder expects feature_dim {self.weight.shape[1]}, "
                f"got {x.shape[1]}"
            )
        return dk.matmul(x, dk.transpose(self.weight))


def project(encoder, features):
    """Map raw node features into the shared embedding space."""
    return encoder.project(features)


@dataclass
class NsawLayer:
    """One message-passing layer.

    W is (out_dim, 2 * in_dim) applied to [message | input] rows, b is
    (1, out_dim), U is (in_dim, attn_dim) for the attention projection.
    """

    W: dk.Tensor
    b: dk.Tensor
    U: dk.Tensor

    @property
    def in_dim(self):
        return self.W.shape[1] // 2

    @property
    def out_dim(self):
        return self.W.shape[0]


@dataclass
class PredictorHead:
    """One-hidden-layer MLP ending in a single sigmoid logit."""

    w_hidden: dk.Tensor
    b_hidden: dk.Tensor
    w_out: dk.Tensor
    b_out: dk.Tensor


@dataclass
class LayerAttention:
    """Attention vectors for one layer, aligned with the graph's slots."""

    pre_sym: dk.Tensor
    sym: dk.Tensor
    graph: AttributedGraph

    def _dense(self, tensor):
        n = self.graph.num_nodes
        dense = np.zeros((n, n))
        dense[self.graph.slot_src, self.graph.indices] = tensor.values[:, 0]
        return dense

    def dense_pre(self):
        """Row-softmax weights as a dense (n, n) array (zeros off-adjacency)."""
        return self._dense(self.pre_sym)

    def dense_sym(self):
        """Symmetrized weights as a dense (n, n) array (zeros off-adjacency)."""
        return self._dense(self.sym)


@dataclass
class AttentionMatrices:
    """Per-layer attention, in layer order; empty when attention is off."""

    layers: list[LayerAttention] = field(default_factory=list)


@dataclass
class ModelBundle:
    source_encoder: ProjectionEncoder
    target_encoder: ProjectionEncoder | None
    layers: list[NsawLayer]
    predictor: PredictorHead
    nsaw_enabled: bool = True

    def encoder_for(self, domain):
        if domain == "source":
            return self.source_encoder
        if domain == "target":
            if self.target_encoder is None:
                raise ConfigError("bundle has no target encoder yet")
            return self.target_encoder
        raise ConfigError(f"unknown domain {domain!r}")

    @property
    def embedding_dim(self):
        return self.layers[-1].out_dim

    def parameter_items(self):
        """All named tensors in a stable order (checkpoint layout)."""
        items = []
        if self.source_encoder.weight is not None:
            items.append(("source_encoder.weight", self.source_encoder.weight))
        if self.target_encoder is not None and self.target_encoder.weight is not None:
            items.append(("target_encoder.weight", self.target_encoder.weight))
        for i, layer in enumerate(self.layers):
            items.append((f"layers.{i}.W", layer.W))
            items.append((f"layers.{i}.b", layer.b))
            items.append((f"layers.{i}.U", layer.U))
        items.append(("predictor.w_hidden", self.predictor.w_hidden))
        items.append(("predictor.b_hidden", self.predictor.b_hidden))
        items.append(("predictor.w_out", self.predictor.w_out))
        items.append(("predictor.b_out", self.predictor.b_out))
        return items

    def trainable_source(self):
        """Parameters updated during source training, in a stable order."""
        params = []
        if self.source_encoder.weight is not None:
            params.append(self.source_encoder.weight)
        for layer in self.layers:
            params.append(layer.W)
            params.append(layer.b)
            if self.nsaw_enabled:
                params.append(layer.U)
        params.extend([self.predictor.w_hidden, self.predictor.b_hidden,
                       self.predictor.w_out, self.predictor.b_out])
        return params

    def trainable_target(self):
        """Parameters updated during test-time training (the target encoder)."""
        if self.target_encoder is None or self.target_encoder.weight is None:
            return []
        return [self.target_encoder.weight]


# ---------------------------------------------------------------------------
# Initialization (uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)),
# biases zero). Draw order is fixed so seeds reproduce bitwise.


def _uniform(rng, rows, cols, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return dk.Tensor(rng.uniform(-a, a, size=(rows, cols)), requires_grad=True)


def init_encoder(rng, p, feature_dim, domain):
    return ProjectionEncoder(_uniform(rng, p, feature_dim, feature_dim, p), domain)


def init_layer(rng, in_dim, out_dim, attn_dim):
    w = _uniform(rng, out_dim, 2 * in_dim, 2 * in_dim, out_dim)
    u = _uniform(rng, in_dim, attn_dim, in_dim, attn_dim)
    b = dk.Tensor(np.zeros((1, out_dim)), requires_grad=True)
    return NsawLayer(W=w, b=b, U=u)


def init_predictor(rng, emb_dim, hidden_dim):
    w_h = _uniform(rng, hidden_dim, emb_dim, emb_dim, hidden_dim)
    w_o = _uniform(rng, 1, hidden_dim, hidden_dim, 1)
    return PredictorHead(
        w_hidden=w_h,
        b_hidden=dk.Tensor(np.zeros((1, hidden_dim)), requires_grad=True),
        w_out=w_o,
        b_out=dk.Tensor(np.zeros((1, 1)), requires_grad=True),
    )


def init_bundle(rng, feature_dim, p, hidden_dim, attn_dim, num_layers,
                nsaw_enabled=True, identity_encoder=False):
    if num_layers < 1:
        raise ConfigError("num_layers must be at least 1")
    if identity_encoder:
        encoder = ProjectionEncoder(None, "source")
        width = feature_dim
    else:
        encoder = init_encoder(rng, p, feature_dim, "source")
        width = p
    layers = []
    for _ in range(num_layers):
        layers.append(init_layer(rng, width, hidden_dim, attn_dim))
        width = hidden_dim
    predictor = init_predictor(rng, width, hidden_dim)
    return ModelBundle(source_encoder=encoder, target_encoder=None,
                       layers=layers, predictor=predictor,
                       nsaw_enabled=nsaw_enabled)


# ---------------------------------------------------------------------------
# Forward passes


def compute_attention(layer, h, graph):
    """Row-softmax attention per directed slot, shape (num_slots, 1).

    Scores are dot products of relu(h @ U) endpoint rows, normalized over
    each node's neighborhood. Rows of isolated nodes simply have no slots.
    """
    z = dk.relu(dk.matmul(h, layer.U))
    z_src = dk.gather_rows(z, graph.slot_src)
    z_dst = dk.gather_rows(z, graph.indices)
    scores = dk.rowwise_dot(z_src, z_dst)
    return dk.segment_softmax(scores, graph.indptr)


def symmetrize_attention(attention, graph):
    """min(A[u,v], A[v,u]) per slot; exactly symmetric, no renormalization."""
    reverse = dk.gather_rows(attention, graph.reverse_slot)
    return dk.minimum(attention, reverse)


def nsaw_layer_forward(layer, h, graph, mode="nsaw", sym_attention=None):
    """One layer: aggregate neighbors, concat with the input row, linear, relu.

    ``mode`` "nsaw" uses symmetrized attention weights (computed from ``h``
    when not supplied); "plain" uses the unweighted neighbor mean. Isolated
    nodes aggregate a zero message either way.
    """
    if h.shape[0] != graph.num_nodes:
        raise ShapeError("layer input rows must match graph nodes")
    if layer.in_dim != h.shape[1]:
        raise ShapeError(f"layer expects width {layer.in_dim}, got {h.shape[1]}")
    neighbors = dk.gather_rows(h, graph.indices)
    if mode == "nsaw":
        if sym_attention is None:
            sym_attention = symmetrize_attention(compute_attention(layer, h, graph), graph)
        message = dk.segment_sum(dk.elementwise_mul(sym_attention, neighbors), graph.indptr)
    elif mode == "plain":
        message = dk.segment_mean(neighbors, graph.indptr)
    else:
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    stacked = dk.concat_cols(message, h)
    return dk.relu(dk.add(dk.matmul(stacked, dk.transpose(layer.W)), layer.b))


def capped_graph(graph, cap):
    """Subgraph keeping at most ``cap`` lowest-id neighbors per node.

    A slot survives only if both endpoints keep each other, so the result
    stays symmetric. Deterministic (no sampling).
    """
    if cap is None or graph.num_slots == 0:
        return graph
    if cap < 1:
        raise ConfigError("neighbor cap must be at least 1")
    pos_in_row = np.arange(graph.num_slots) - graph.indptr[graph.slot_src]
    keep = pos_in_row < cap
    keep &= keep[graph.reverse_slot]
    if keep.all():
        return graph
    counts = np.zeros(graph.num_nodes, dtype=np.int64)
    np.add.at(counts, graph.slot_src[keep], 1)
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return AttributedGraph(graph.name, graph.num_nodes, indptr,
                           graph.indices[keep], graph.features, graph.labels)


def forward_embeddings(bundle, graph, domain, training=False, rng=None,
                       dropout_rate=0.0, neighbor_cap=None):
    """Full forward pass; returns (final embeddings, per-layer attention).

    In training mode, dropout is applied to each layer's input (including the
    projected features) and attention is computed from that dropped-out
    input. Eval mode (the default) is deterministic.
    """
    if training and dropout_rate > 0.0 and rng is None:
        raise ConfigError("training-mode forward needs an rng for dropout")
    g = capped_graph(graph, neighbor_cap)
    encoder = bundle.encoder_for(domain)
    h = encoder.project(g.features)
    attentions = AttentionMatrices()
    for layer in bundle.layers:
        x = dk.dropout(h, dropout_rate, rng, training)
        if bundle.nsaw_enabled:
            pre = compute_attention(layer, x, g)
            sym = symmetrize_attention(pre, g)
            attentions.layers.append(LayerAttention(pre_sym=pre, sym=sym, graph=g))
            h = nsaw_layer_forward(layer, x, g, mode="nsaw", sym_attention=sym)
        else:
            h = nsaw_layer_forward(layer, x, g, mode="plain")
    return h, attentions


def predict(bundle, embeddings):
    """Anomaly probabilities from final embeddings, shape (n, 1)."""
    p = bundle.predictor
    hidden = dk.relu(dk.add(dk.matmul(embeddings, dk.transpose(p.w_hidden)), p.b_hidden))
    logits = dk.add(dk.matmul(hidden, dk.transpose(p.w_out)), p.b_out)
    return dk.sigmoid(logits)
