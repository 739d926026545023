"""Two-phase training: supervised source fit, then label-free adaptation.

Source training runs full-batch Adam on the combined supervised and
self-supervised objective and finishes by recording per-class centroids of
the final embeddings. Adaptation trains only the target-domain encoder on
the self-supervised objective, scoring each epoch with a label-free
centroid distance ratio and keeping the best-scoring snapshot. Everything
is deterministic given (data, config, seed).
"""

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, fields

import numpy as np

from . import diffkernel as dk
from . import evaluation, losses
from .errors import CheckpointError, ConfigError, DataError
from .gnn import (ModelBundle, NsawLayer, PredictorHead, ProjectionEncoder,
                  forward_embeddings, init_bundle, init_encoder, predict)
from .graphstore import SyntheticSpec, generate_synthetic
from .losses import LossWeights

__all__ = [
    "RunConfig", "ClassCentroids", "PatienceTracker", "AdaptationTrace",
    "MarginReport", "LoadedCheckpoint", "FullModelGradCheck",
    "train_source", "adapt_target", "early_stop_score", "margin_trace_check",
    "clone_bundle", "save_checkpoint", "load_checkpoint",
    "full_model_grad_check",
]

TTT_INITS = ("fresh", "source", "keep")
CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    """Every knob of a run; serializes to a flat JSON object.

    ``ttt_init`` picks how the target encoder starts: "fresh" (random),
    "source" (copy the source encoder; needs matching feature dims), or
    "keep" (reuse the bundle's existing target encoder).
    """

    seed: int = 0
    p: int = 40
    hidden_dim: int = 40
    attn_dim: int = 40
    num_layers: int = 2
    lr: float = 0.001
    dropout_rate: float = 0.7
    source_epochs: int = 100
    ttt_max_epochs: int = 100
    patience: int = 10
    ttt_init: str = "fresh"
    scoring_mode: str = "affinity"
    nsaw_enabled: bool = True
    identity_encoder: bool = False
    neighbor_cap: int | None = None
    weights: LossWeights = field(default_factory=LossWeights)

    def validate(self):
        if self.source_epochs < 1:
            raise ConfigError("source_epochs ≥ 1")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.ttt_max_epochs < 0:
            raise ConfigError("ttt_max_epochs must be non-negative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        for name in ("p", "hidden_dim", "attn_dim", "num_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.ttt_init not in TTT_INITS:
            raise ConfigError(f"ttt_init must be one of {TTT_INITS}")
        if self.scoring_mode not in evaluation.SCORING_MODES:
            raise ConfigError(f"scoring_mode must be one of {evaluation.SCORING_MODES}")
        if self.neighbor_cap is not None and self.neighbor_cap < 1:
            raise ConfigError("neighbor_cap must be at least 1")
        self.weights.validate()
        return self

    def to_dict(self):
        out = {}
        for f in fields(self):
            if f.name == "weights":
                continue
            out[f.name] = getattr(self, f.name)
        for f in fields(LossWeights):
            out[f.name] = getattr(self.weights, f.name)
        return out

    @classmethod
    def from_dict(cls, data):
        own = {f.name for f in fields(cls)} - {"weights"}
        weight_names = {f.name for f in fields(LossWeights)}
        kwargs, wkwargs = {}, {}
        for key, value in data.items():
            if key in own:
                kwargs[key] = value
            elif key in weight_names:
                wkwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(weights=LossWeights(**wkwargs), **kwargs)


@dataclass
class ClassCentroids:
    """Per-class means of final-layer source embeddings (eval mode)."""

    normal: np.ndarray
    anomaly: np.ndarray

    @classmethod
    def from_embeddings(cls, values, labels):
        values = np.asarray(values, dtype=np.float64)
        labels = np.asarray(labels)
        if not (labels == 0).any() or not (labels == 1).any():
            raise DataError("centroids need at least one node of each class")
        normal = values[labels == 0].mean(axis=0)
        anomaly = values[labels == 1].mean(axis=0)
        if not (np.all(np.isfinite(normal)) and np.all(np.isfinite(anomaly))):
            raise DataError("centroids must be finite")
        return cls(normal=normal, anomaly=anomaly)


def early_stop_score(embedding_values, centroids):
    """Mean per-node ratio of the larger to the smaller centroid distance.

    Always ≥ 1; higher means nodes sit decisively closer to one centroid,
    which is the label-free signal that embeddings are separating. The
    smaller distance is clamped at 1e-12.
    """
    values = np.asarray(embedding_values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] == 0:
        raise DataError("empty target")
    d_normal = np.linalg.norm(values - centroids.normal, axis=1)
    d_anomaly = np.linalg.norm(values - centroids.anomaly, axis=1)
    hi = np.maximum(d_normal, d_anomaly)
    lo = np.maximum(np.minimum(d_normal, d_anomaly), 1e-12)
    return float(np.mean(hi / lo))


class PatienceTracker:
    """Best-so-far tracking with strict-improvement patience.

    ``update`` is called once per epoch (1-indexed); it returns whether the
    score strictly improved on the best seen. An ``initial_score`` counts
    as epoch 0, so a run that never improves keeps its starting state.
    """

    def __init__(self, patience, initial_score=None):
        if patience < 1:
            raise ConfigError("patience must be at least 1")
        self.patience = int(patience)
        self.best_score = -math.inf if initial_score is None else float(initial_score)
        self.best_epoch = 0
        self.epoch = 0
        self.stale = 0

    def update(self, score):
        self.epoch += 1
        if score > self.best_score:
            self.best_score = float(score)
            self.best_epoch = self.epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self):
        return self.stale >= self.patience


@dataclass
class AdaptationTrace:
    """Per-epoch record of one adaptation run.

    ``epochs`` holds dicts with keys epoch, loss, score and, when the
    target graph carried labels, margin (mean affinity of normal minus
    anomalous nodes). ``chosen_epoch`` 0 means the initialization won.
    """

    epochs: list
    initial_score: float
    initial_margin: float | None
    chosen_epoch: int
    best_score: float
    stop_reason: str
    lr: float
    ttt_init: str
    homogeneous_dims: bool

    def to_dict(self):
        return {
            "epochs": self.epochs,
            "initial_score": self.initial_score,
            "initial_margin": self.initial_margin,
            "chosen_epoch": self.chosen_epoch,
            "best_score": self.best_score,
            "stop_reason": self.stop_reason,
            "lr": self.lr,
            "ttt_init": self.ttt_init,
            "homogeneous_dims": self.homogeneous_dims,
        }


def _eval_forward(bundle, graph, domain, config):
    h, _ = forward_embeddings(bundle, graph, domain,
                              neighbor_cap=config.neighbor_cap)
    return h


def train_source(graph, config, rng=None):
    """Fit the model on a labeled source graph.

    Returns (bundle, centroids, log): the trained parameters, per-class
    embedding centroids for later early stopping, and a per-epoch list of
    loss components and ranking quality on the training graph.
    """
    config.validate()
    if graph.labels is None:
        raise DataError("source training requires labels")
    labels = graph.labels
    if not (labels == 0).any() or not (labels == 1).any():
        raise DataError("source training requires both classes")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    bundle = init_bundle(rng, graph.feature_dim, config.p, config.hidden_dim,
                         config.attn_dim, config.num_layers,
                         nsaw_enabled=config.nsaw_enabled,
                         identity_encoder=config.identity_encoder)
    params = bundle.trainable_source()
    state = dk.AdamState(params, lr=config.lr)
    log = []
    for epoch in range(1, config.source_epochs + 1):
        with dk.Tape() as tape:
            h, _ = forward_embeddings(bundle, graph, "source", training=True,
                                      rng=rng, dropout_rate=config.dropout_rate,
                                      neighbor_cap=config.neighbor_cap)
            probs = predict(bundle, h)
            total, parts = losses.train_loss_parts(probs, h, graph,
                                                   config.weights, rng)
        grads = tape.backward(total)
        dk.adam_step(params, grads, state)

        h_eval = _eval_forward(bundle, graph, "source", config)
        probs_eval = predict(bundle, h_eval)
        aff = losses.affinity_scores(h_eval, graph)
        entry = {"epoch": epoch}
        entry.update(parts)
        entry["auroc"] = evaluation.auroc(probs_eval.values[:, 0], labels)
        entry["auroc_affinity"] = evaluation.auroc(-aff.values(), labels)
        log.append(entry)

    h_final = _eval_forward(bundle, graph, "source", config)
    centroids = ClassCentroids.from_embeddings(h_final.values, labels)
    return bundle, centroids, log


def _clone_tensor(tensor):
    if tensor is None:
        return None
    return dk.Tensor(tensor.values, requires_grad=tensor.requires_grad)


def _clone_encoder(encoder):
    if encoder is None:
        return None
    return ProjectionEncoder(_clone_tensor(encoder.weight), encoder.domain)


def clone_bundle(bundle):
    """Deep copy; the clone shares no tensors with the original."""
    layers = [NsawLayer(W=_clone_tensor(l.W), b=_clone_tensor(l.b),
                        U=_clone_tensor(l.U)) for l in bundle.layers]
    pred = bundle.predictor
    predictor = PredictorHead(w_hidden=_clone_tensor(pred.w_hidden),
                              b_hidden=_clone_tensor(pred.b_hidden),
                              w_out=_clone_tensor(pred.w_out),
                              b_out=_clone_tensor(pred.b_out))
    return ModelBundle(source_encoder=_clone_encoder(bundle.source_encoder),
                       target_encoder=_clone_encoder(bundle.target_encoder),
                       layers=layers, predictor=predictor,
                       nsaw_enabled=bundle.nsaw_enabled)


def _init_target_encoder(work, graph, config, rng):
    """Install the target encoder per config.ttt_init; returns trainables."""
    shared_width = work.layers[0].in_dim
    source_weight = work.source_encoder.weight
    if source_weight is None:
        if graph.feature_dim != shared_width:
            raise DataError(
                f"feature dim mismatch without encoder: graph has "
                f"{graph.feature_dim}, model expects {shared_width}")
        work.target_encoder = ProjectionEncoder(None, "target")
        return []
    if config.ttt_init == "keep":
        if work.target_encoder is None or work.target_encoder.weight is None:
            raise ConfigError("ttt_init 'keep' needs a bundle with a target encoder")
    elif config.ttt_init == "source":
        if source_weight.shape[1] != graph.feature_dim:
            raise ConfigError(
                "ttt_init 'source' needs the target feature dimension to "
                f"match the source ({source_weight.shape[1]}), got {graph.feature_dim}")
        work.target_encoder = ProjectionEncoder(
            dk.Tensor(source_weight.values, requires_grad=True), "target")
    else:
        work.target_encoder = init_encoder(rng, shared_width,
                                           graph.feature_dim, "target")
    return work.trainable_target()


def adapt_target(bundle, centroids, graph, config, rng=None):
    """Adapt the target encoder to an unlabeled graph; decoder stays frozen.

    Gradients flow through every parameter but only the target encoder is
    updated. After each epoch the centroid distance ratio is evaluated in
    eval mode; the best-scoring encoder snapshot (the initialization
    counts) is restored before returning. If the graph carries labels
    (evaluation only; the objective never sees them) the per-epoch
    affinity margin is recorded in the trace.

    Returns (adapted bundle, AdaptationTrace). The input bundle is not
    modified.
    """
    config.validate()
    if centroids is None:
        raise DataError("adaptation requires source centroids")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    work = clone_bundle(bundle)
    params = _init_target_encoder(work, graph, config, rng)
    if config.ttt_max_epochs > 0 and not params:
        raise DataError("identity encoder leaves nothing to adapt")

    source_weight = work.source_encoder.weight
    source_in = source_weight.shape[1] if source_weight is not None \
        else work.layers[0].in_dim
    homogeneous = graph.feature_dim == source_in

    track_margin = False
    if graph.labels is not None:
        valid = graph.degrees > 0
        track_margin = bool((valid & (graph.labels == 0)).any()
                            and (valid & (graph.labels == 1)).any())

    def eval_pass():
        h = _eval_forward(work, graph, "target", config)
        score = early_stop_score(h.values, centroids)
        margin = None
        if track_margin:
            aff = losses.affinity_scores(h, graph)
            margin = losses.affinity_margin(aff.values(), aff.valid, graph.labels)
        return score, margin

    initial_score, initial_margin = eval_pass()
    tracker = PatienceTracker(config.patience, initial_score=initial_score)
    best_values = [p.values.copy() for p in params]

    state = dk.AdamState(params, lr=config.lr)
    epochs = []
    stop_reason = "no_epochs" if config.ttt_max_epochs == 0 else "max_epochs"
    for epoch in range(1, config.ttt_max_epochs + 1):
        with dk.Tape() as tape:
            h, _ = forward_embeddings(work, graph, "target", training=True,
                                      rng=rng, dropout_rate=config.dropout_rate,
                                      neighbor_cap=config.neighbor_cap)
            loss = losses.ttt_loss(h, graph, config.weights, rng)
        grads = tape.backward(loss)
        dk.adam_step(params, grads, state)

        score, margin = eval_pass()
        entry = {"epoch": epoch, "loss": loss.item(), "score": score}
        if track_margin:
            entry["margin"] = margin
        epochs.append(entry)
        if tracker.update(score):
            best_values = [p.values.copy() for p in params]
        if tracker.should_stop:
            stop_reason = "patience"
            break

    for param, values in zip(params, best_values):
        param.values[...] = values

    trace = AdaptationTrace(epochs=epochs, initial_score=initial_score,
                            initial_margin=initial_margin,
                            chosen_epoch=tracker.best_epoch,
                            best_score=tracker.best_score,
                            stop_reason=stop_reason, lr=config.lr,
                            ttt_init=config.ttt_init,
                            homogeneous_dims=homogeneous)
    return work, trace


@dataclass
class MarginReport:
    """Margin behavior of one adaptation run, plus precondition bookkeeping."""

    fraction_increasing: float
    initial_margin: float
    final_margin: float
    num_steps: int
    preconditions: dict
    monotone_claim_applicable: bool

    def to_dict(self):
        return {
            "fraction_increasing": self.fraction_increasing,
            "initial_margin": self.initial_margin,
            "final_margin": self.final_margin,
            "num_steps": self.num_steps,
            "preconditions": dict(self.preconditions),
            "monotone_claim_applicable": self.monotone_claim_applicable,
        }


def margin_trace_check(trace):
    """How often the affinity margin rose from one epoch to the next.

    The monotone-increase claim is only expected to hold when the run
    satisfied the checkable preconditions: equal feature dimensions, a
    small learning rate, and a target encoder started from the source
    encoder. The report states the preconditions rather than enforcing
    them.
    """
    margins = [e["margin"] for e in trace.epochs if e.get("margin") is not None]
    if trace.initial_margin is None or not margins:
        raise DataError("trace has no margin data; adapt with a labeled target")
    chain = np.array([trace.initial_margin] + margins)
    diffs = np.diff(chain)
    preconditions = {
        "homogeneous_dims": bool(trace.homogeneous_dims),
        "small_lr": trace.lr <= 0.01,
        "init_from_source": trace.ttt_init == "source",
    }
    return MarginReport(
        fraction_increasing=float(np.mean(diffs > 0)),
        initial_margin=float(chain[0]),
        final_margin=float(chain[-1]),
        num_steps=int(diffs.size),
        preconditions=preconditions,
        monotone_claim_applicable=all(preconditions.values()),
    )


# ---------------------------------------------------------------------------
# Checkpoints: one header line of JSON, then raw little-endian float64 blocks.


def save_checkpoint(bundle, centroids, config, path):
    """Write a self-describing single-file checkpoint, atomically.

    Layout: a JSON header line {"version", "config", "centroids",
    "tensors": [{name, rows, cols, byte_offset}]} followed by the tensors'
    row-major little-endian float64 payloads; byte offsets are relative to
    the first byte after the header's newline.
    """
    descriptors = []
    blobs = []
    offset = 0
    for name, tensor in bundle.parameter_items():
        arr = np.ascontiguousarray(tensor.values, dtype="<f8")
        blob = arr.tobytes()
        descriptors.append({"name": name, "rows": int(arr.shape[0]),
                            "cols": int(arr.shape[1]), "byte_offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = {
        "version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "centroids": None if centroids is None else {
            "normal": centroids.normal.tolist(),
            "anomaly": centroids.anomaly.tolist(),
        },
        "tensors": descriptors,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + b"".join(blobs)

    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


@dataclass
class LoadedCheckpoint:
    bundle: ModelBundle
    config: RunConfig
    centroids: ClassCentroids | None


def _expected_tensor_names(config):
    names = []
    if not config.identity_encoder:
        names.append("source_encoder.weight")
    for i in range(config.num_layers):
        names.extend([f"layers.{i}.W", f"layers.{i}.b", f"layers.{i}.U"])
    names.extend(["predictor.w_hidden", "predictor.b_hidden",
                  "predictor.w_out", "predictor.b_out"])
    return names


def load_checkpoint(path, expect_nsaw=None):
    """Read a checkpoint back; inverse of :func:`save_checkpoint`.

    ``expect_nsaw`` asserts the stored attention mode: loading a
    checkpoint whose mode differs is an error, never a silent fallback.
    """
    with open(os.fspath(path), "rb") as fh:
        raw = fh.read()
    newline = raw.find(b"\n")
    if newline < 0:
        raise CheckpointError("malformed checkpoint: no header line")
    try:
        header = json.loads(raw[:newline])
    except json.JSONDecodeError as e:
        raise CheckpointError(f"malformed checkpoint header: {e}") from e
    if not isinstance(header, dict):
        raise CheckpointError("malformed checkpoint header: not an object")
    version = header.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    for key in ("config", "tensors"):
        if key not in header:
            raise CheckpointError(f"malformed checkpoint header: missing {key!r}")
    try:
        config = RunConfig.from_dict(header["config"]).validate()
    except (ConfigError, TypeError) as e:
        raise CheckpointError(f"invalid checkpoint config: {e}") from e
    if expect_nsaw is not None and config.nsaw_enabled != bool(expect_nsaw):
        stored = "nsaw" if config.nsaw_enabled else "plain"
        wanted = "nsaw" if expect_nsaw else "plain"
        raise CheckpointError(
            f"checkpoint uses {stored} aggregation but {wanted} was requested")

    payload = raw[newline + 1:]
    tensors = {}
    end = 0
    for desc in header["tensors"]:
        try:
            name = desc["name"]
            rows, cols = int(desc["rows"]), int(desc["cols"])
            offset = int(desc["byte_offset"])
        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointError(f"malformed tensor descriptor: {desc!r}") from e
        size = rows * cols * 8
        if rows < 1 or cols < 1 or offset < 0 or offset + size > len(payload):
            raise CheckpointError(f"corrupt tensor block {name!r}")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}")
        flat = np.frombuffer(payload, dtype="<f8", count=rows * cols, offset=offset)
        tensors[name] = dk.Tensor(flat.reshape(rows, cols), requires_grad=True)
        end = max(end, offset + size)
    if end != len(payload):
        raise CheckpointError(
            f"corrupt tensor block: {len(payload) - end} trailing byte(s)")

    expected = _expected_tensor_names(config)
    known = set(expected) | {"target_encoder.weight"}
    for name in tensors:
        if name not in known:
            raise CheckpointError(f"unexpected tensor {name!r}")
    for name in expected:
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}")

    if config.identity_encoder:
        source_encoder = ProjectionEncoder(None, "source")
    else:
        source_encoder = ProjectionEncoder(tensors["source_encoder.weight"], "source")
    target_encoder = None
    if "target_encoder.weight" in tensors:
        target_encoder = ProjectionEncoder(tensors["target_encoder.weight"], "target")
    layers = [NsawLayer(W=tensors[f"layers.{i}.W"], b=tensors[f"layers.{i}.b"],
                        U=tensors[f"layers.{i}.U"])
              for i in range(config.num_layers)]
    predictor = PredictorHead(w_hidden=tensors["predictor.w_hidden"],
                              b_hidden=tensors["predictor.b_hidden"],
                              w_out=tensors["predictor.w_out"],
                              b_out=tensors["predictor.b_out"])
    bundle = ModelBundle(source_encoder=source_encoder,
                         target_encoder=target_encoder,
                         layers=layers, predictor=predictor,
                         nsaw_enabled=config.nsaw_enabled)

    centroids = None
    stored = header.get("centroids")
    if stored is not None:
        centroids = ClassCentroids(normal=np.asarray(stored["normal"], dtype=np.float64),
                                   anomaly=np.asarray(stored["anomaly"], dtype=np.float64))
    return LoadedCheckpoint(bundle=bundle, config=config, centroids=centroids)


# ---------------------------------------------------------------------------
# Whole-model gradient checking


@dataclass
class FullModelGradCheck:
    train_report: dk.GradCheckReport
    ttt_report: dk.GradCheckReport
    passed: bool


def full_model_grad_check(seed=0, num_points=5, num_nodes=9, feature_dim=4,
                          width=5, num_layers=2, step=1e-5, tol=1e-4):
    """Finite-difference check of both composite objectives, end to end.

    At each of ``num_points`` random parameter points, every coordinate of
    every trainable tensor is compared against central differences: the
    supervised objective over the source parameters and the adaptation
    objective over the target encoder. Forward passes run in eval mode so
    the function is smooth except at relu kinks.
    """
    spec = SyntheticSpec(num_nodes=num_nodes, feature_dim=feature_dim,
                         anomaly_rate=0.25, target_homophily=0.7,
                         mean_degree=4.0, seed=seed, name="gradcheck")
    graph = generate_synthetic(spec)
    weights = LossWeights()

    worst = {"train": [0.0, 0.0], "ttt": [0.0, 0.0]}

    def track(kind, report):
        worst[kind][0] = max(worst[kind][0], report.max_rel_error)
        worst[kind][1] = max(worst[kind][1], report.max_abs_error)

    for point in range(num_points):
        rng = np.random.default_rng(seed * 7919 + point + 1)
        bundle = init_bundle(rng, feature_dim, width, width, width, num_layers)
        bundle.target_encoder = init_encoder(rng, width, feature_dim, "target")
        sample_seed = seed * 104729 + point

        def train_objective(_):
            h, _ = forward_embeddings(bundle, graph, "source")
            probs = predict(bundle, h)
            return losses.train_loss(probs, h, graph, weights,
                                     np.random.default_rng(sample_seed))

        def ttt_objective(_):
            h, _ = forward_embeddings(bundle, graph, "target")
            return losses.ttt_loss(h, graph, weights,
                                   np.random.default_rng(sample_seed))

        for param in bundle.trainable_source():
            track("train", dk.grad_check(train_objective, param, step=step, tol=tol))
        for param in bundle.trainable_target():
            track("ttt", dk.grad_check(ttt_objective, param, step=step, tol=tol))

    train_report = dk.GradCheckReport(max_rel_error=worst["train"][0],
                                      max_abs_error=worst["train"][1],
                                      tol=tol, passed=worst["train"][0] <= tol)
    ttt_report = dk.GradCheckReport(max_rel_error=worst["ttt"][0],
                                    max_abs_error=worst["ttt"][1],
                                    tol=tol, passed=worst["ttt"][0] <= tol)
    return FullModelGradCheck(train_report=train_report, ttt_report=ttt_report,
                              passed=train_report.passed and ttt_report.passed)
