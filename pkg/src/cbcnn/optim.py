"""Adam updates and the minibatch training loop.

The update applies the standard bias-corrected rule on top of the moment
recurrences m_t = b1*m + (1-b1)*g and v_t = b2*v + (1-b2)*g^2, with
(b1, b2, eps) = (0.9, 0.999, 1e-8).  A boolean mask selects trainable
coordinates; masked-out parameters and their moments are never touched.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    InsufficientDataError,
    LengthMismatchError,
    NonFiniteError,
    NonFiniteGradientError,
)
from .metrics import auc_score
from .rng import ensure_rng


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-4

    @classmethod
    def fresh(cls, n, lr=1e-4):
        return cls(np.zeros(n), np.zeros(n), 0, lr=lr)


def adam_step(state, params, grads, mask=None):
    """One Adam update.  Returns (new_params, new_state)."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise LengthMismatchError(
            f"params {params.shape}, grads {grads.shape}, state {state.m.shape}"
        )
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradientError("gradient contains NaN or Inf")
    if mask is None:
        mask = np.ones(params.shape, dtype=bool)
    t = state.t + 1
    m = state.m.copy()
    v = state.v.copy()
    m[mask] = state.beta1 * state.m[mask] + (1.0 - state.beta1) * grads[mask]
    v[mask] = state.beta2 * state.v[mask] + (1.0 - state.beta2) * grads[mask] ** 2
    m_hat = m[mask] / (1.0 - state.beta1**t)
    v_hat = v[mask] / (1.0 - state.beta2**t)
    out = params.copy()
    out[mask] = params[mask] - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out, replace(state, m=m, v=v, t=t)


@dataclass
class TrainConfig:
    batch_size: int = 20
    lr: float = 1e-4
    epochs: int = 50
    val_fraction: float = 0.1
    mask: np.ndarray = None  # trainable coordinates; None = all

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")


@dataclass
class TrainHistory:
    epochs: list = field(default_factory=list)  # (epoch, train_loss, val_auc)
    final_state: AdamState = None  # optimizer moments at the last step

    def to_csv(self):
        lines = ["epoch,train_loss,val_auc"]
        for e, loss, va in self.epochs:
            lines.append(f"{e},{repr(float(loss))},{repr(float(va))}")
        return "\n".join(lines) + "\n"


def _val_split(labels, fraction, rng):
    """Stratified holdout indices: per class, round fraction*n down but keep
    at least one sample when the class has two or more."""
    val = []
    for cls in np.unique(labels):
        idx = np.nonzero(labels == cls)[0]
        if idx.shape[0] < 2:
            continue
        take = max(1, int(np.floor(fraction * idx.shape[0])))
        take = min(take, idx.shape[0] - 1)
        perm = rng.child(f"val{cls}").permutation(idx.shape[0])
        val.extend(idx[perm[:take]].tolist())
    return np.array(sorted(val), dtype=np.int64)


def train(net, inputs, labels, cfg, rng):
    """Minibatch Adam training with per-epoch validation AUC selection.

    Splits off a stratified validation fraction, then runs seeded-shuffle
    epochs over the rest (the last partial minibatch is used).  Returns the
    parameters with the best validation AUC (earliest on ties) and a history
    of (epoch, train_loss, val_auc).
    """
    rng = ensure_rng(rng)
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if inputs.shape[0] != labels.shape[0]:
        raise LengthMismatchError("inputs and labels disagree on sample count")
    n = inputs.shape[0]
    val_idx = _val_split(labels, cfg.val_fraction, rng)
    train_mask = np.ones(n, dtype=bool)
    train_mask[val_idx] = False
    tr_idx = np.nonzero(train_mask)[0]
    if tr_idx.shape[0] < cfg.batch_size:
        raise InsufficientDataError(
            f"{tr_idx.shape[0]} training samples < batch size {cfg.batch_size}"
        )
    x_tr, y_tr = inputs[tr_idx], labels[tr_idx]
    x_val, y_val = inputs[val_idx], labels[val_idx]
    has_val = val_idx.size > 0 and np.unique(y_val).shape[0] == 2

    history = TrainHistory()
    if cfg.epochs == 0:
        return net, history

    params = net.params.copy()
    state = AdamState.fresh(params.shape[0], lr=cfg.lr)
    mask = cfg.mask
    best_auc = -np.inf
    best_params = params.copy()
    n_tr = x_tr.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.child(f"epoch{epoch}").permutation(n_tr)
        losses = []
        for start in range(0, n_tr, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            work = net.with_params(params)
            loss, grads = work.loss_grad(x_tr[batch], y_tr[batch])
            if not np.isfinite(loss):
                raise NonFiniteError(
                    f"non-finite loss at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            params, state = adam_step(state, params, grads, mask)
            losses.append(loss)
        if has_val:
            scores = net.with_params(params).forward(x_val)[:, 1]
            val_auc = auc_score(scores, y_val)
        else:
            val_auc = 0.5
        history.epochs.append((epoch, float(np.mean(losses)), val_auc))
        if val_auc > best_auc:
            best_auc = val_auc
            best_params = params.copy()
    history.final_state = state
    return net.with_params(best_params), history
