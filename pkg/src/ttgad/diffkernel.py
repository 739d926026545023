"""Minimal reverse-mode autodiff over dense 2-D float64 arrays.

Everything is a :class:`Tensor` wrapping a 2-D numpy array. Ops executed
while a :class:`Tape` is active are recorded; ``Tape.backward(loss)`` replays
the records in exact reverse execution order and accumulates gradients
additively. With no active tape, ops are plain numpy computations (eval mode).

Design constraints honored throughout:

- all math in float64; every op validates that its output is finite;
- relu has zero derivative at exactly 0;
- guarded denominators: cosine uses eps = 1e-12, softmax subtracts the
  per-row/per-segment max before exponentiation;
- segment ops (softmax / sum / mean over CSR rows) give empty segments an
  all-zero output and route exactly zero gradient outside their slots.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError

__all__ = [
    "Tensor", "Tape", "Gradients", "backward",
    "matmul", "add", "concat_cols", "relu", "sigmoid", "elementwise_mul",
    "minimum", "negate", "scalar_mul", "sum", "row_mean", "transpose",
    "masked_row_softmax", "cosine_rows", "rowwise_dot", "gather_rows",
    "segment_softmax", "segment_sum", "segment_mean",
    "binary_cross_entropy", "dropout",
    "AdamState", "adam_step", "GradCheckReport", "grad_check",
]

COSINE_EPS = 1e-12

_ACTIVE_TAPES = []


class Tensor:
    """2-D float64 array with a requires_grad flag.

    Scalars are stored as shape (1, 1); 1-D input becomes a row vector.
    The public constructor copies its input; internal ops wrap freshly
    allocated arrays without copying.
    """

    __slots__ = ("values", "requires_grad", "_tape")

    def __init__(self, values, requires_grad=False):
        arr = np.array(values, dtype=np.float64, copy=True)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError("tensors are 2-D (scalars (1,1), vectors 1xN or Nx1)")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self._tape = None

    @classmethod
    def _wrap(cls, arr, requires_grad):
        t = cls.__new__(cls)
        t.values = arr
        t.requires_grad = requires_grad
        t._tape = None
        return t

    @property
    def shape(self):
        return self.values.shape

    def item(self):
        if self.values.shape != (1, 1):
            raise ShapeError("item() requires a scalar tensor")
        return float(self.values[0, 0])

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


class Gradients:
    """Gradient map returned by backward; unknown tensors read as zeros."""

    def __init__(self, store):
        self._store = store

    def __getitem__(self, tensor):
        entry = self._store.get(id(tensor))
        if entry is None:
            return np.zeros_like(tensor.values)
        return entry[1]

    def __contains__(self, tensor):
        return id(tensor) in self._store


class Tape:
    """Ordered record of executed ops for one forward pass."""

    def __init__(self):
        self._entries = []
        self._consumed = False

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPES.pop()
        return False

    def backward(self, loss):
        if loss.shape != (1, 1):
            raise ShapeError("backward requires a scalar loss")
        if self._consumed:
            raise ValueError("backward already ran on this tape; re-run the forward pass")
        self._consumed = True
        store = {id(loss): (loss, np.ones((1, 1)))}
        for out, bwd in reversed(self._entries):
            entry = store.get(id(out))
            if entry is None:
                continue
            for tensor, grad in bwd(entry[1]):
                if not tensor.requires_grad:
                    continue
                acc = store.get(id(tensor))
                if acc is None:
                    store[id(tensor)] = (tensor, grad)
                else:
                    store[id(tensor)] = (tensor, acc[1] + grad)
        return Gradients(store)


def backward(loss):
    """Run the backward pass of the tape that recorded ``loss``."""
    tape = loss._tape
    if tape is None:
        raise ValueError("loss was not recorded on an active tape")
    return tape.backward(loss)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(op, arr, *inputs):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{op} produced non-finite values")
    rg = any(t.requires_grad for t in inputs)
    return Tensor._wrap(arr, rg)


def _emit(out, bwd):
    if _ACTIVE_TAPES and out.requires_grad:
        tape = _ACTIVE_TAPES[-1]
        tape._entries.append((out, bwd))
        out._tape = tape
        return True
    return False


def _unbroadcast(g, shape):
    if shape[0] == 1 and g.shape[0] > 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] > 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Dense ops


def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = _make("matmul", a.values @ b.values, a, b)
    av, bv = a.values, b.values
    _emit(out, lambda g: ((a, g @ bv.T), (b, av.T @ g)))
    return out


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        vals = a.values + b.values
    except ValueError as e:
        raise ShapeError(f"add: {a.shape} + {b.shape}") from e
    out = _make("add", vals, a, b)
    _emit(out, lambda g: ((a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))))
    return out


def elementwise_mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        vals = a.values * b.values
    except ValueError as e:
        raise ShapeError(f"elementwise_mul: {a.shape} * {b.shape}") from e
    out = _make("elementwise_mul", vals, a, b)
    av, bv = a.values, b.values
    _emit(out, lambda g: ((a, _unbroadcast(g * bv, a.shape)),
                          (b, _unbroadcast(g * av, b.shape))))
    return out


def minimum(a, b):
    """Elementwise min; gradient goes to the smaller side, split 0.5 on ties."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    out = _make("minimum", np.minimum(av, bv), a, b)

    def bwd(g):
        wa = np.where(av < bv, 1.0, np.where(av == bv, 0.5, 0.0))
        return ((a, g * wa), (b, g * (1.0 - wa)))

    _emit(out, bwd)
    return out


def negate(x):
    x = _as_tensor(x)
    out = _make("negate", -x.values, x)
    _emit(out, lambda g: ((x, -g),))
    return out


def scalar_mul(x, c):
    x = _as_tensor(x)
    c = float(c)
    out = _make("scalar_mul", x.values * c, x)
    _emit(out, lambda g: ((x, g * c),))
    return out


def concat_cols(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: {a.shape} | {b.shape}")
    out = _make("concat_cols", np.hstack([a.values, b.values]), a, b)
    wa = a.shape[1]
    _emit(out, lambda g: ((a, g[:, :wa]), (b, g[:, wa:])))
    return out


def relu(x):
    x = _as_tensor(x)
    out = _make("relu", np.maximum(x.values, 0.0), x)
    mask = x.values > 0  # derivative at exactly 0 is 0
    _emit(out, lambda g: ((x, g * mask),))
    return out


def sigmoid(x):
    x = _as_tensor(x)
    v = x.values
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    s[~pos] = ev / (1.0 + ev)
    out = _make("sigmoid", s, x)
    _emit(out, lambda g: ((x, g * s * (1.0 - s)),))
    return out


def sum(x):
    """Sum of all entries, as a (1, 1) tensor."""
    x = _as_tensor(x)
    out = _make("sum", np.array([[x.values.sum()]]), x)
    shape = x.shape
    _emit(out, lambda g: ((x, np.full(shape, g[0, 0])),))
    return out


def row_mean(x):
    """Mean across columns of each row, shape (rows, 1)."""
    x = _as_tensor(x)
    if x.shape[1] == 0:
        raise ShapeError("row_mean of zero-width matrix")
    out = _make("row_mean", x.values.mean(axis=1, keepdims=True), x)
    cols = x.shape[1]
    _emit(out, lambda g: ((x, np.repeat(g / cols, cols, axis=1)),))
    return out


def transpose(x):
    x = _as_tensor(x)
    out = _make("transpose", np.ascontiguousarray(x.values.T), x)
    _emit(out, lambda g: ((x, np.ascontiguousarray(g.T)),))
    return out


def masked_row_softmax(scores, mask):
    """Row-wise softmax restricted to positions where mask is nonzero.

    Masked positions are exactly zero in the output and receive exactly zero
    gradient. A row whose mask is all zero yields an all-zero row. The mask is
    treated as a constant.
    """
    scores = _as_tensor(scores)
    mask_arr = mask.values if isinstance(mask, Tensor) else np.asarray(mask)
    if mask_arr.shape != scores.shape:
        raise ShapeError(f"masked_row_softmax: mask {mask_arr.shape} vs scores {scores.shape}")
    allowed = mask_arr != 0
    v = scores.values
    p = np.zeros_like(v)
    rows_with = allowed.any(axis=1)
    if rows_with.any():
        masked_vals = np.where(allowed, v, -np.inf)
        row_max = masked_vals[rows_with].max(axis=1, keepdims=True)
        sub = np.where(allowed[rows_with], masked_vals[rows_with] - row_max, -np.inf)
        e = np.where(allowed[rows_with], np.exp(np.where(allowed[rows_with], sub, 0.0)), 0.0)
        p[rows_with] = e / e.sum(axis=1, keepdims=True)
    out = _make("masked_row_softmax", p, scores)

    def bwd(g):
        inner = (p * g).sum(axis=1, keepdims=True)
        return ((scores, p * (g - inner)),)

    _emit(out, bwd)
    return out


def cosine_rows(a, b):
    """Cosine similarity of paired rows: out[i] = cos(a[i], b[i]), shape (m, 1).

    The denominator is max(|a_i| * |b_i|, 1e-12); pairs under the guard get
    value ~0 and exactly zero gradient.
    """
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"cosine_rows: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    dot = (av * bv).sum(axis=1, keepdims=True)
    na = np.sqrt((av * av).sum(axis=1, keepdims=True))
    nb = np.sqrt((bv * bv).sum(axis=1, keepdims=True))
    prod = na * nb
    guarded = prod < COSINE_EPS
    denom = np.maximum(prod, COSINE_EPS)
    c = dot / denom
    out = _make("cosine_rows", c, a, b)

    def bwd(g):
        live = ~guarded
        na2 = np.where(guarded, 1.0, na * na)
        nb2 = np.where(guarded, 1.0, nb * nb)
        ga = np.where(live, g * (bv / denom - c * av / na2), 0.0)
        gb = np.where(live, g * (av / denom - c * bv / nb2), 0.0)
        return ((a, ga), (b, gb))

    _emit(out, bwd)
    return out


def rowwise_dot(a, b):
    """Dot product of paired rows, shape (m, 1)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"rowwise_dot: {a.shape} vs {b.shape}")
    av, bv = a.values, b.values
    out = _make("rowwise_dot", (av * bv).sum(axis=1, keepdims=True), a, b)
    _emit(out, lambda g: ((a, g * bv), (b, g * av)))
    return out


def gather_rows(x, idx):
    """Select rows by index; scatter-adds gradients back on the reverse pass."""
    x = _as_tensor(x)
    idx = np.asarray(idx, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError("gather_rows: index out of range")
    out = _make("gather_rows", x.values[idx], x)
    rows = x.shape[0]

    def bwd(g):
        buf = np.zeros((rows, g.shape[1]))
        np.add.at(buf, idx, g)
        return ((x, buf),)

    _emit(out, bwd)
    return out


# ---------------------------------------------------------------------------
# Segment ops (contiguous CSR-style segments described by an indptr array)


def _check_indptr(indptr, total):
    indptr = np.asarray(indptr, dtype=np.int64)
    if indptr.ndim != 1 or indptr.size < 1 or indptr[0] != 0 or indptr[-1] != total:
        raise ShapeError("indptr must start at 0 and end at the number of rows")
    if np.any(np.diff(indptr) < 0):
        raise ShapeError("indptr must be non-decreasing")
    return indptr


def _segment_sums(values, indptr):
    """Per-segment sums along axis 0; empty segments give zero rows."""
    n = indptr.size - 1
    out = np.zeros((n,) + values.shape[1:])
    widths = np.diff(indptr)
    nz = widths > 0
    if values.shape[0] and nz.any():
        out[nz] = np.add.reduceat(values, indptr[:-1][nz], axis=0)
    return out


def _segment_ids(indptr):
    return np.repeat(np.arange(indptr.size - 1, dtype=np.int64), np.diff(indptr))


def segment_softmax(x, indptr):
    """Softmax within each contiguous segment of rows of a (m, 1) tensor."""
    x = _as_tensor(x)
    if x.shape[1] != 1:
        raise ShapeError("segment_softmax expects a column vector")
    indptr = _check_indptr(indptr, x.shape[0])
    flat = x.values[:, 0]
    seg = _segment_ids(indptr)
    n = indptr.size - 1
    seg_max = np.full(n, -np.inf)
    widths = np.diff(indptr)
    nz = widths > 0
    if flat.size and nz.any():
        seg_max[nz] = np.maximum.reduceat(flat, indptr[:-1][nz])
    e = np.exp(flat - seg_max[seg]) if flat.size else flat.copy()
    denom = _segment_sums(e, indptr)
    p = (e / denom[seg]) if flat.size else e
    out = _make("segment_softmax", p.reshape(-1, 1), x)

    def bwd(g):
        gp = g[:, 0]
        inner = _segment_sums(p * gp, indptr)
        return ((x, (p * (gp - inner[seg])).reshape(-1, 1)),)

    _emit(out, bwd)
    return out


def segment_sum(x, indptr):
    """Sum rows within each segment; output has one row per segment."""
    x = _as_tensor(x)
    indptr = _check_indptr(indptr, x.shape[0])
    out = _make("segment_sum", _segment_sums(x.values, indptr), x)
    seg = _segment_ids(indptr)
    _emit(out, lambda g: ((x, g[seg]),))
    return out


def segment_mean(x, indptr):
    """Mean of rows within each segment; empty segments give zero rows."""
    x = _as_tensor(x)
    indptr = _check_indptr(indptr, x.shape[0])
    widths = np.diff(indptr).astype(np.float64)
    safe = np.maximum(widths, 1.0)
    sums = _segment_sums(x.values, indptr)
    out = _make("segment_mean", sums / safe[:, None], x)
    seg = _segment_ids(indptr)
    inv = 1.0 / safe
    _emit(out, lambda g: ((x, g[seg] * inv[seg][:, None]),))
    return out


# ---------------------------------------------------------------------------
# Losses / regularization primitives


def binary_cross_entropy(probs, labels):
    """Mean binary cross-entropy of probabilities against 0/1 labels.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the logs; the
    gradient uses the clamped value and passes straight through the clamp.
    """
    probs = _as_tensor(probs)
    if probs.shape[1] != 1:
        raise ShapeError("binary_cross_entropy expects a column of probabilities")
    y = np.asarray(labels, dtype=np.float64).reshape(-1, 1)
    if y.shape != probs.shape:
        raise ShapeError("binary_cross_entropy: labels do not match probabilities")
    n = probs.shape[0]
    if n == 0:
        raise ShapeError("binary_cross_entropy of an empty batch")
    p = np.clip(probs.values, 1e-7, 1.0 - 1e-7)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)).mean()
    out = _make("binary_cross_entropy", np.array([[loss]]), probs)
    _emit(out, lambda g: ((probs, g[0, 0] * (p - y) / (p * (1.0 - p)) / n),))
    return out


def dropout(x, rate, rng, training):
    """Inverted dropout: zero entries with probability ``rate``, scale the rest.

    Identity when ``training`` is false or ``rate`` is 0 (returns ``x``
    itself). The mask comes from ``rng``, so it is deterministic per seed.
    """
    x = _as_tensor(x)
    if not (0.0 <= rate < 1.0):
        raise ShapeError("dropout rate must lie in [0, 1)")
    if not training or rate == 0.0:
        return x
    keep = rng.random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    out = _make("dropout", x.values * keep * scale, x)
    _emit(out, lambda g: ((x, g * keep * scale),))
    return out


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """First/second-moment buffers for a fixed, ordered parameter list."""

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m = [np.zeros_like(p.values) for p in params]
        self.v = [np.zeros_like(p.values) for p in params]


def adam_step(params, grads, state):
    """One Adam update with bias correction; mutates params in place.

    ``grads`` is either a :class:`Gradients` map or a sequence aligned with
    ``params``. Returns (params, state).
    """
    if len(state.m) != len(params):
        raise ShapeError("adam_step: state does not match the parameter list")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = grads[p] if isinstance(grads, Gradients) else grads[i]
        if g.shape != p.values.shape:
            raise ShapeError("adam_step: gradient shape mismatch")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.values -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        if not np.all(np.isfinite(p.values)):
            raise NumericalError("adam_step produced non-finite parameters")
    return params, state


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    max_abs_error: float
    tol: float
    passed: bool


def grad_check(f, point, step=1e-5, tol=1e-4):
    """Compare tape gradients of ``f`` at ``point`` against central differences.

    ``f`` must map the given tensor to a scalar tensor, deterministically
    (re-create any rng it uses on every call). The relative error is the max
    coordinate-wise |analytic - numeric| divided by
    max(|analytic|_inf, |numeric|_inf, 1e-8).
    """
    if not isinstance(point, Tensor) or not point.requires_grad:
        raise ValueError("grad_check needs a requires_grad tensor")
    with Tape() as tape:
        y = f(point)
    if y.shape != (1, 1):
        raise ShapeError("grad_check target must return a scalar")
    analytic = tape.backward(y)[point]

    base = point.values
    numeric = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    while not it.finished:
        ij = it.multi_index
        orig = base[ij]
        base[ij] = orig + step
        fp = f(point).item()
        base[ij] = orig - step
        fm = f(point).item()
        base[ij] = orig
        numeric[ij] = (fp - fm) / (2.0 * step)
        it.iternext()

    abs_err = np.abs(analytic - numeric)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), 1e-8)
    max_abs = float(abs_err.max(initial=0.0))
    max_rel = max_abs / scale
    return GradCheckReport(max_rel_error=max_rel, max_abs_error=max_abs,
                           tol=float(tol), passed=max_rel <= tol)
