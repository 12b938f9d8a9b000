"""Two-level masked cross-entropy, backpropagation through time, SGD training."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .encode import ABOVE, EncodedSequence, MaskGroup, ModelKind, Threshold
from .net import (GATES, Batch, Model, block_names, forward_batch, grouped_softmax, init_params,
                  make_batch, predict_batch, stacked)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.5
    lr_decay: float = 0.95
    weight_decay: float = 1e-4
    clip_norm: float = 5.0
    dropout_rate: float = 0.5
    batch_size: int = 32
    epochs: int = 25
    seed: int = 0
    hidden_dim: int = 50
    side_dim: int | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.learning_rate < 0 or self.weight_decay < 0 or self.clip_norm <= 0:
            raise ValueError("learning_rate/weight_decay must be >= 0 and clip_norm > 0")


def _selectors(labels, masks, m: int):
    """Boolean selectors (letter entries, P/NP entries) of the labeled outcomes.

    Raises if a label one-hot disagrees with its mask selector.
    """
    masks = np.asarray(masks)
    slots = np.asarray(labels).reshape(masks.shape + (m + 2,))
    letter_hot = slots[..., :m].sum(-1)
    pnp_hot = slots[..., m:].sum(-1)
    is_letter = masks == MaskGroup.LETTER
    is_pnp = masks == MaskGroup.PASS_NO_PASS
    ok = (np.where(is_letter, letter_hot == 1, letter_hot == 0)
          & np.where(is_pnp, pnp_hot == 1, pnp_hot == 0))
    if not ok.all():
        raise ValueError("label one-hot inconsistent with mask selector")
    letter_sel = (slots[..., :m] == 1) & is_letter[..., None]
    pnp_sel = (slots[..., m:] == 1) & is_pnp[..., None]
    return slots, is_letter, is_pnp, letter_sel, pnp_sel


def masked_loss(predictions, labels, masks, m: int = 2) -> float:
    """Cross entropy of group-softmaxed ``predictions`` against labels, summed
    only over the group each course's mask selects."""
    _, _, _, letter_sel, pnp_sel = _selectors(labels, masks, m)
    slots = np.asarray(predictions, dtype=float).reshape(letter_sel.shape[:-1] + (m + 2,))
    picked = np.concatenate([slots[..., :m][letter_sel], slots[..., m:][pnp_sel]])
    return float(0.0 - np.log(picked).sum())


def _log_softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    return x - np.log(np.exp(x).sum(axis=-1, keepdims=True))


def masked_loss_from_logits(logits, labels, masks, m: int = 2) -> tuple[float, np.ndarray]:
    """Masked loss and its gradient w.r.t. the logits.

    The gradient is exactly zero on every entry outside the selected groups.
    """
    loss, grad = _masked_loss_raw(logits, labels, masks, m)
    return float(loss), grad


def _masked_loss_raw(logits, labels, masks, m):
    # keeps the logits' dtype so the finite-difference oracle can run in extended precision
    slots, is_letter, is_pnp, letter_sel, pnp_sel = _selectors(labels, masks, m)
    z = np.asarray(logits).reshape(slots.shape)
    grad = np.zeros_like(z)
    ce = np.zeros(is_letter.shape, dtype=z.dtype)
    if is_letter.any():
        logp = _log_softmax(z[is_letter][:, :m])
        yl = slots[is_letter][:, :m]
        ce[is_letter] = -np.where(yl == 1, logp, 0).sum(-1)
        grad_l = grad[..., :m]
        grad_l[is_letter] = np.exp(logp) - yl
    if is_pnp.any():
        logp = _log_softmax(z[is_pnp][:, m:])
        yp = slots[is_pnp][:, m:]
        ce[is_pnp] = -np.where(yp == 1, logp, 0).sum(-1)
        grad_p = grad[..., m:]
        grad_p[is_pnp] = np.exp(logp) - yp
    # (T, B, n): sum each sequence first so the total is linear in the batch
    loss = ce.sum(axis=(0, 2)).sum() if ce.ndim == 3 else ce.sum()
    return loss, grad.reshape(np.shape(logits))


def _check_finite(name: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {name}")


def backward_bptt(model: Model, batch, config: TrainConfig | None = None, rng=None,
                  dropout: bool = True) -> tuple[float, dict]:
    """Summed masked loss over the batch and its gradient for every block.

    ``batch`` is a :class:`Batch` or a list of encoded sequences. Dropout on
    the output-layer input is applied when ``config.dropout_rate > 0`` and
    ``dropout`` is true.
    """
    if not isinstance(batch, Batch):
        batch = make_batch(model.kind, batch)
    rate = config.dropout_rate if (config is not None and dropout) else 0.0
    cache = forward_batch(model, batch.x, batch.side_in, rate, rng)
    _check_finite("logits", cache.logits)
    loss, dlogits = masked_loss_from_logits(cache.logits, batch.labels, batch.masks, model.dims.m)
    return loss, _backprop(model, cache, dlogits)


def _backprop(model: Model, cache, dlogits) -> dict:
    p = model.params
    d = model.dims.d
    T, B, _ = dlogits.shape
    grads = {}
    flat = dlogits.reshape(T * B, -1)
    grads["W_out"] = flat.T @ cache.z.reshape(T * B, -1)
    grads["b_out"] = flat.sum(0)
    dz = dlogits @ p["W_out"]
    if cache.keep is not None:
        dz = dz * cache.keep
    dh_out = dz[..., :d]
    if model.kind == ModelKind.MODEL3:
        ds = dz[..., d:].reshape(T * B, -1)
        grads["W_side"] = ds.T @ cache.side_in.reshape(T * B, -1)
        grads["b_side"] = ds.sum(0)

    _, Wh, _ = stacked(model)
    da = np.empty((T, B, 4 * d))
    dh_next = np.zeros((B, d))
    dC_next = np.zeros((B, d))
    for t in range(T - 1, -1, -1):
        g = cache.gates[t]
        f, i, c_tilde, o = (g[:, j * d:(j + 1) * d] for j in range(4))
        tc = cache.tanh_C[t]
        dh = dh_out[t] + dh_next
        dC = dh * o * (1.0 - tc * tc) + dC_next
        da[t, :, :d] = dC * cache.C[t] * f * (1.0 - f)
        da[t, :, d:2 * d] = dC * c_tilde * i * (1.0 - i)
        da[t, :, 2 * d:3 * d] = dC * i * (1.0 - c_tilde * c_tilde)
        da[t, :, 3 * d:] = dh * tc * o * (1.0 - o)
        dh_next = da[t] @ Wh
        dC_next = dC * f

    da_flat = da.reshape(T * B, 4 * d)
    dWg = da_flat.T @ cache.x.reshape(T * B, -1)
    dWh = da_flat.T @ cache.h[:-1].reshape(T * B, d)
    db = da_flat.sum(0)
    for j, gate in enumerate(GATES):
        rows = slice(j * d, (j + 1) * d)
        grads[f"W_{gate}g"] = dWg[rows]
        grads[f"W_{gate}h"] = dWh[rows]
        grads[f"b_{gate}"] = db[rows]
    out = {name: grads[name] for name in block_names(model.kind)}
    for name, arr in out.items():
        _check_finite(name, arr)
    return out


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def clip_gradients(grads: dict, clip_norm: float) -> dict:
    norm = global_norm(grads)
    if norm <= clip_norm:
        return grads
    scale = clip_norm / norm
    return {k: g * scale for k, g in grads.items()}


def sgd_step(model: Model, grads: dict, config: TrainConfig, learning_rate: float | None = None) -> Model:
    """Clip to ``config.clip_norm`` then apply ``theta -= lr * (g + wd * theta)``."""
    lr = config.learning_rate if learning_rate is None else learning_rate
    if set(grads) != set(model.params):
        raise ValueError("gradient blocks do not match the model")
    grads = clip_gradients(grads, config.clip_norm)
    wd = config.weight_decay
    new = {}
    for name, theta in model.params.items():
        if grads[name].shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        new[name] = theta - lr * (grads[name] + wd * theta)
    return model.replace_params(new)


def batch_loss(model: Model, batch) -> float:
    if not isinstance(batch, Batch):
        batch = make_batch(model.kind, batch)
    cache = forward_batch(model, batch.x, batch.side_in)
    return masked_loss_from_logits(cache.logits, batch.labels, batch.masks, model.dims.m)[0]


def _batch_loss_ext(model: Model, batch: Batch):
    ext = np.longdouble
    side = None if batch.side_in is None else batch.side_in.astype(ext)
    cache = forward_batch(model, batch.x.astype(ext), side)
    return _masked_loss_raw(cache.logits, batch.labels, batch.masks, model.dims.m)[0]


def numerical_gradients(model: Model, batch, epsilon: float = 1e-5) -> dict:
    """Central differences of the batch loss, evaluated in extended precision."""
    if not isinstance(batch, Batch):
        batch = make_batch(model.kind, batch)
    probe = model.replace_params({k: v.astype(np.longdouble) for k, v in model.params.items()})
    eps = np.longdouble(epsilon)
    out = {}
    for name, theta in probe.params.items():
        g = np.zeros_like(theta)
        flat, gflat = theta.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = _batch_loss_ext(probe, batch)
            flat[j] = orig - eps
            down = _batch_loss_ext(probe, batch)
            flat[j] = orig
            gflat[j] = (up - down) / (2 * eps)
        out[name] = g.astype(float)
    return out


def relative_error(analytic: dict, numeric: dict) -> float:
    worst = 0.0
    for name, a in analytic.items():
        b = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


def finite_diff_check(model: Model, batch, epsilon: float = 1e-5, analytic: dict | None = None) -> float:
    """Max relative error between backprop and central differences (dropout off)."""
    if not isinstance(batch, Batch):
        batch = make_batch(model.kind, batch)
    if analytic is None:
        _, analytic = backward_bptt(model, batch, None)
    return relative_error(analytic, numerical_gradients(model, batch, epsilon))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    learning_rate: float


@dataclass
class TrainResult:
    model: Model
    history: list = field(default_factory=list)
    best_epoch: int = 0


def letter_accuracy(model: Model, seqs: Sequence[EncodedSequence]) -> tuple[float, float]:
    """(summed masked loss, letter accuracy in %) over the labeled letter entries."""
    if not seqs:
        return float("nan"), float("nan")
    m = model.dims.m
    loss, correct, total = 0.0, 0, 0
    for probs, s in zip(predict_batch(model, seqs), seqs):
        loss += masked_loss(probs, s.labels, s.masks, m)
        slots = probs.reshape(len(s), -1, m + 2)
        truth = s.labels.reshape(slots.shape)
        sel = s.masks == MaskGroup.LETTER
        if sel.any():
            pred = np.argmax(slots[..., :m][sel], axis=-1)
            correct += int(np.sum(pred == np.argmax(truth[..., :m][sel], axis=-1)))
            total += int(sel.sum())
    return loss, (100.0 * correct / total if total else float("nan"))


def train(kind: ModelKind, train_seqs: Sequence[EncodedSequence], val_seqs: Sequence[EncodedSequence],
          config: TrainConfig, n: int, m: int, k: int, threshold: Threshold = Threshold.B,
          progress=None) -> TrainResult:
    """Minibatch SGD on the summed masked loss, averaged per sequence in a batch.

    Keeps the parameters with the best validation letter accuracy (ties go to
    the earlier epoch); without validation data the final model is kept.
    """
    if not train_seqs:
        raise ValueError("empty training split")
    rng = np.random.default_rng(config.seed)
    model = init_params(kind, n, m, k, config.hidden_dim, config.side_dim, threshold,
                        seed=int(rng.integers(2**31)))
    result = TrainResult(model.copy())
    if config.epochs <= 0:
        return result
    best_acc = -np.inf
    lr = config.learning_rate
    order = np.arange(len(train_seqs))
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_seqs[j] for j in order[start:start + config.batch_size]]
            batch = make_batch(kind, chunk)
            loss, grads = backward_bptt(model, batch, config, rng)
            scale = 1.0 / batch.size
            model = sgd_step(model, {k_: g * scale for k_, g in grads.items()}, config, lr)
            total += loss
        train_loss = total / len(train_seqs)
        val_loss, val_acc = letter_accuracy(model, val_seqs) if val_seqs else (float("nan"), float("nan"))
        if val_seqs:
            val_loss /= len(val_seqs)
        result.history.append(EpochStats(epoch, train_loss, val_loss, val_acc, lr))
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.2f", epoch, train_loss, val_loss, val_acc)
        if progress is not None:
            progress(result.history[-1])
        score = val_acc if not np.isnan(val_acc) else -val_loss
        if not val_seqs:
            result.model, result.best_epoch = model, epoch
        elif score > best_acc:
            best_acc = score
            result.model, result.best_epoch = model.copy(), epoch
        lr *= config.lr_decay
    return result


def predicted_above(probs: np.ndarray, m: int) -> np.ndarray:
    """Per-course flag: letter argmax is the above-threshold category."""
    slots = probs.reshape(-1, m + 2)
    return slots[:, ABOVE] >= slots[:, 1:m].max(axis=-1)
