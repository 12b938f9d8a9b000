"""Single-layer LSTM grade predictor in three input topologies.

Model 1 feeds g_t to the LSTM. Model 2 feeds concat(g_t, c_{t+1}). Model 3
feeds concat(g_t, m_t) and routes c_{t+1} through a linear side branch that
joins the hidden state at the output layer only, so next-semester
co-enrollment never reaches the recurrent state.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encode import EncodedSequence, ModelKind, Threshold, build_model_input, input_dims

GATES = ("f", "i", "C", "o")
LSTM_BLOCKS = tuple(name for gate in GATES for name in (f"W_{gate}g", f"W_{gate}h", f"b_{gate}"))
OUTPUT_BLOCKS = ("W_out", "b_out")
SIDE_BLOCKS = ("W_side", "b_side")


@dataclass(frozen=True)
class Dims:
    n: int
    m: int
    k: int
    d: int = 50
    d_side: int = 0

    def __post_init__(self):
        if min(self.n, self.m, self.k, self.d) <= 0 or self.d_side < 0:
            raise ValueError(f"dimensions must be positive: {self}")

    @property
    def width(self) -> int:
        """Length of one course slot."""
        return self.m + 2

    @property
    def out_dim(self) -> int:
        return (self.m + 2) * self.n


@dataclass
class Model:
    kind: ModelKind
    dims: Dims
    threshold: Threshold
    params: dict = field(repr=False)

    @property
    def input_dim(self) -> int:
        return input_dims(self.kind, self.dims.n, self.dims.m, self.dims.k)[0]

    @property
    def block_names(self) -> tuple:
        return block_names(self.kind)

    def copy(self) -> "Model":
        return Model(self.kind, self.dims, self.threshold, {k: v.copy() for k, v in self.params.items()})

    def replace_params(self, params: dict) -> "Model":
        return Model(self.kind, self.dims, self.threshold, params)


def block_names(kind: ModelKind) -> tuple:
    names = LSTM_BLOCKS + OUTPUT_BLOCKS
    return names + SIDE_BLOCKS if ModelKind(kind) == ModelKind.MODEL3 else names


def block_shapes(kind: ModelKind, dims: Dims) -> dict:
    kind = ModelKind(kind)
    in_dim, side_dim = input_dims(kind, dims.n, dims.m, dims.k)
    d = dims.d
    shapes = {}
    for gate in GATES:
        shapes[f"W_{gate}g"] = (d, in_dim)
        shapes[f"W_{gate}h"] = (d, d)
        shapes[f"b_{gate}"] = (d,)
    out_in = d + (dims.d_side if kind == ModelKind.MODEL3 else 0)
    shapes["W_out"] = (dims.out_dim, out_in)
    shapes["b_out"] = (dims.out_dim,)
    if kind == ModelKind.MODEL3:
        shapes["W_side"] = (dims.d_side, side_dim)
        shapes["b_side"] = (dims.d_side,)
    return shapes


def init_params(kind: ModelKind, n: int, m: int, k: int, d: int = 50, d_side: int | None = None,
                threshold: Threshold = Threshold.B, seed: int = 0) -> Model:
    """Weights uniform in +-1/sqrt(fan_in) (fan_in = matrix columns), biases zero."""
    kind = ModelKind(kind)
    if d_side is None:
        d_side = d if kind == ModelKind.MODEL3 else 0
    elif kind != ModelKind.MODEL3:
        d_side = 0
    dims = Dims(n, m, k, d, d_side)
    if kind == ModelKind.MODEL3 and d_side <= 0:
        raise ValueError("Model 3 needs a positive side-branch width")
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in block_shapes(kind, dims).items():
        if name.startswith("b_"):
            params[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, size=shape)
    return Model(kind, dims, threshold, params)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class HiddenState:
    h: np.ndarray
    C: np.ndarray
    f: np.ndarray | None = None
    i: np.ndarray | None = None
    C_tilde: np.ndarray | None = None
    o: np.ndarray | None = None

    @classmethod
    def zeros(cls, d: int, batch: int | None = None) -> "HiddenState":
        shape = (d,) if batch is None else (batch, d)
        return cls(np.zeros(shape), np.zeros(shape))


def _params(model_or_params) -> dict:
    return model_or_params.params if isinstance(model_or_params, Model) else model_or_params


def lstm_step(params, x_t, state_prev: HiddenState) -> HiddenState:
    """One LSTM step; ``x_t`` may be a vector or a (batch, input) matrix."""
    p = _params(params)
    x_t = np.asarray(x_t, dtype=float)
    if x_t.shape[-1] != p["W_fg"].shape[1]:
        raise ValueError(f"input length {x_t.shape[-1]} != {p['W_fg'].shape[1]}")
    if state_prev.h.shape[-1] != p["W_fh"].shape[0]:
        raise ValueError("hidden state width does not match parameters")
    h = state_prev.h

    def pre(gate):
        return x_t @ p[f"W_{gate}g"].T + h @ p[f"W_{gate}h"].T + p[f"b_{gate}"]

    f = sigmoid(pre("f"))
    i = sigmoid(pre("i"))
    C_tilde = np.tanh(pre("C"))
    o = sigmoid(pre("o"))
    C = f * state_prev.C + i * C_tilde
    return HiddenState(o * np.tanh(C), C, f, i, C_tilde, o)


def side_activation(model: Model, c_next) -> np.ndarray:
    return np.asarray(c_next) @ model.params["W_side"].T + model.params["b_side"]


def output_input(model: Model, h_t, c_next=None) -> np.ndarray:
    """The vector the output layer sees: h_t, or concat(h_t, side) for Model 3."""
    if model.kind != ModelKind.MODEL3:
        return np.asarray(h_t)
    if c_next is None:
        raise ValueError("Model 3 needs the next-semester co-enrollment vector")
    return np.concatenate([h_t, side_activation(model, c_next)], axis=-1)


def output_logits(model: Model, h_t, c_next=None) -> np.ndarray:
    z = output_input(model, h_t, c_next)
    return z @ model.params["W_out"].T + model.params["b_out"]


def _softmax_last(x):
    x = x - x.max(axis=-1, keepdims=True)
    e = np.exp(x)
    return e / e.sum(axis=-1, keepdims=True)


def grouped_softmax(logits, m: int) -> np.ndarray:
    """Softmax within every course's letter group and within its P/NP group."""
    logits = np.asarray(logits, dtype=float)
    slots = logits.reshape(logits.shape[:-1] + (-1, m + 2))
    out = np.empty_like(slots)
    out[..., :m] = _softmax_last(slots[..., :m])
    out[..., m:] = _softmax_last(slots[..., m:])
    return out.reshape(logits.shape)


def group_softmax(logits, course_index: int, m: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """(letter probabilities, pass/no-pass probabilities) for one course."""
    logits = np.asarray(logits, dtype=float)
    w = m + 2
    if not 0 <= course_index < logits.shape[-1] // w:
        raise IndexError(f"course index {course_index} out of range")
    slot = logits[..., course_index * w:(course_index + 1) * w]
    return _softmax_last(slot[..., :m]), _softmax_last(slot[..., m:])


@dataclass
class ForwardCache:
    """Everything backpropagation needs from a batched forward pass (time-major)."""

    x: np.ndarray          # (T, B, in)
    side_in: np.ndarray | None  # (T, B, n)
    h: np.ndarray          # (T+1, B, d), h[0] = initial
    C: np.ndarray          # (T+1, B, d)
    gates: np.ndarray      # (T, B, 4d) post-activation f, i, C~, o
    tanh_C: np.ndarray     # (T, B, d)
    z: np.ndarray          # (T, B, out_in) output-layer input after dropout
    keep: np.ndarray | None  # dropout multipliers, same shape as z
    logits: np.ndarray     # (T, B, out)


def stacked(model: Model) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    p = model.params
    Wg = np.concatenate([p[f"W_{g}g"] for g in GATES], axis=0)
    Wh = np.concatenate([p[f"W_{g}h"] for g in GATES], axis=0)
    b = np.concatenate([p[f"b_{g}"] for g in GATES])
    return Wg, Wh, b


def forward_batch(model: Model, x, side_in=None, dropout_rate: float = 0.0, rng=None) -> ForwardCache:
    """Run a padded, time-major batch through the network."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(float)
    dt = x.dtype
    T, B, _ = x.shape
    d = model.dims.d
    if x.shape[2] != model.input_dim:
        raise ValueError(f"input length {x.shape[2]} != {model.input_dim}")
    if model.kind == ModelKind.MODEL3 and side_in is None:
        raise ValueError("Model 3 needs the next-semester co-enrollment vectors")
    Wg, Wh, b = stacked(model)
    xw = (x.reshape(T * B, -1) @ Wg.T).reshape(T, B, 4 * d) + b
    h = np.zeros((T + 1, B, d), dtype=dt)
    C = np.zeros((T + 1, B, d), dtype=dt)
    gates = np.empty((T, B, 4 * d), dtype=dt)
    tanh_C = np.empty((T, B, d), dtype=dt)
    for t in range(T):
        a = xw[t] + h[t] @ Wh.T
        gates[t, :, :2 * d] = sigmoid(a[:, :2 * d])
        gates[t, :, 2 * d:3 * d] = np.tanh(a[:, 2 * d:3 * d])
        gates[t, :, 3 * d:] = sigmoid(a[:, 3 * d:])
        f, i, g, o = (gates[t, :, j * d:(j + 1) * d] for j in range(4))
        C[t + 1] = f * C[t] + i * g
        tanh_C[t] = np.tanh(C[t + 1])
        h[t + 1] = o * tanh_C[t]
    z = h[1:]
    if model.kind == ModelKind.MODEL3:
        side_in = np.asarray(side_in, dtype=dt)
        z = np.concatenate([z, side_activation(model, side_in)], axis=-1)
    else:
        side_in = None
    keep = None
    if dropout_rate > 0.0:
        if rng is None:
            raise ValueError("dropout needs an rng")
        p_keep = 1.0 - dropout_rate
        keep = (rng.random(z.shape) < p_keep) / p_keep
        z = z * keep
    logits = z @ model.params["W_out"].T + model.params["b_out"]
    return ForwardCache(x, side_in, h, C, gates, tanh_C, z, keep, logits)


@dataclass(frozen=True)
class Batch:
    """Tail-padded, time-major tensors for a list of sequences."""

    x: np.ndarray
    side_in: np.ndarray | None
    labels: np.ndarray     # (T, B, out)
    masks: np.ndarray      # (T, B, n)
    lengths: np.ndarray

    @property
    def size(self) -> int:
        return self.x.shape[1]


def make_batch(kind: ModelKind, seqs: Sequence[EncodedSequence]) -> Batch:
    if not seqs:
        raise ValueError("empty batch")
    T = max(len(s) for s in seqs)
    B = len(seqs)
    first = seqs[0]
    out_dim, n = first.grades.shape[1], first.next_courses.shape[1]
    kind = ModelKind(kind)
    rec_in, side_dim = input_dims(kind, n, out_dim // n - 2, first.majors.shape[1])
    x = np.zeros((T, B, rec_in))
    side = np.zeros((T, B, side_dim)) if side_dim else None
    labels = np.zeros((T, B, out_dim))
    masks = np.zeros((T, B, n), dtype=np.int8)
    lengths = np.zeros(B, dtype=int)
    for j, s in enumerate(seqs):
        L = len(s)
        lengths[j] = L
        rec, sd = build_model_input(kind, s.grades, s.next_courses, s.majors)
        x[:L, j] = rec
        if side is not None:
            side[:L, j] = sd
        labels[:L, j] = s.labels
        masks[:L, j] = s.masks
    return Batch(x, side, labels, masks, lengths)


def forward_sequence(model: Model, seq: EncodedSequence) -> np.ndarray:
    """Group-softmaxed predictions, one row per step (row t predicts semester t+1)."""
    if len(seq) == 0:
        raise ValueError("empty sequence")
    batch = make_batch(model.kind, [seq])
    cache = forward_batch(model, batch.x, batch.side_in)
    return grouped_softmax(cache.logits[:, 0], model.dims.m)


def predict_batch(model: Model, seqs: Sequence[EncodedSequence], batch_size: int = 256) -> list[np.ndarray]:
    out = []
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        batch = make_batch(model.kind, chunk)
        probs = grouped_softmax(forward_batch(model, batch.x, batch.side_in).logits, model.dims.m)
        out.extend(probs[:len(s), j] for j, s in enumerate(chunk))
    return out
