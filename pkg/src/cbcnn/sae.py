"""Greedy layer-wise sparse autoencoder used as the auxiliary learner.

Each depth trains a single-hidden-layer autoencoder (logistic sigmoid on
both sides) on the frozen codes of the previous depth, minimizing
reconstruction MSE plus a Bernoulli-KL penalty that pulls every hidden
unit's mean activation toward the sparse coefficient gamma.  Encoders are
stacked; decoders mirror them in reverse.
"""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .errors import DimensionMismatchError, EmptyBatchError, NonFiniteError
from .optim import AdamState, adam_step
from .rng import ensure_rng
from .validation import check_matrix

_CLAMP = 1e-7


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def kl_sparsity(activations, gamma):
    """Summed Bernoulli KL(gamma || mean activation) over hidden units.

    Mean activations are clamped into [1e-7, 1 - 1e-7] so the logs stay
    finite; the penalty is zero exactly when every unit's mean equals gamma.
    """
    acts = check_matrix(activations, "activations")
    g_n = np.clip(acts.mean(axis=0), _CLAMP, 1.0 - _CLAMP)
    return float(
        np.sum(gamma * np.log(gamma / g_n) + (1.0 - gamma) * np.log((1.0 - gamma) / (1.0 - g_n)))
    )


@dataclass
class SaeConfig:
    layer_sizes: tuple = None  # encoder widths, input first; None = scaled default
    gamma: float = 0.05
    beta: float = 1.0
    lr: float = 1e-3
    epochs: int = 15
    batch_size: int = 32

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.layer_sizes is not None and min(self.layer_sizes) < 1:
            raise ValueError("layer widths must be >= 1")


def default_layer_sizes(input_dim):
    """The 60->48->32->24->16 ladder, scaled proportionally to the input."""
    base = (60, 48, 32, 24, 16)
    return tuple([input_dim] + [max(1, round(w * input_dim / 60)) for w in base[1:]])


@dataclass
class SingleLayerAe:
    """One encode/decode pair; the unit trained at each greedy depth."""

    we: np.ndarray
    be: np.ndarray
    wd: np.ndarray
    bd: np.ndarray

    @classmethod
    def init(cls, d_in, d_h, rng):
        lim = np.sqrt(6.0 / (d_in + d_h))
        return cls(
            rng.uniform_array(-lim, lim, (d_in, d_h)),
            np.zeros(d_h),
            rng.uniform_array(-lim, lim, (d_h, d_in)),
            np.zeros(d_in),
        )

    def to_flat(self):
        return np.concatenate(
            [self.we.reshape(-1), self.be, self.wd.reshape(-1), self.bd]
        )

    @classmethod
    def from_flat(cls, flat, d_in, d_h):
        a = d_in * d_h
        return cls(
            flat[:a].reshape(d_in, d_h),
            flat[a : a + d_h],
            flat[a + d_h : a + d_h + a].reshape(d_h, d_in),
            flat[a + d_h + a :],
        )


def layer_loss(ae, batch, cfg):
    """(mse, sparsity, total) of a single-layer AE on a batch."""
    mse, kl, *_ = _layer_forward(ae, batch, cfg.gamma)
    return mse, kl, mse + cfg.beta * kl


def _layer_forward(ae, batch, gamma):
    batch = check_matrix(batch, "batch")
    if batch.shape[0] == 0:
        raise EmptyBatchError("empty batch")
    if batch.shape[1] != ae.we.shape[0]:
        raise DimensionMismatchError(
            f"batch width {batch.shape[1]} != input width {ae.we.shape[0]}"
        )
    h = sigmoid(batch @ ae.we + ae.be)
    r = sigmoid(h @ ae.wd + ae.bd)
    mse = float(((r - batch) ** 2).mean())
    kl = kl_sparsity(h, gamma)
    return mse, kl, h, r


def layer_loss_grad(ae, batch, cfg):
    """Total layer loss and its exact gradient as a flat vector."""
    mse, kl, h, r = _layer_forward(ae, batch, cfg.gamma)
    n, d = batch.shape
    dr_pre = (2.0 * (r - batch) / (n * d)) * r * (1.0 - r)
    dwd = h.T @ dr_pre
    dbd = dr_pre.sum(axis=0)
    dh = dr_pre @ ae.wd.T
    if cfg.beta != 0.0:
        g_raw = h.mean(axis=0)
        active = (g_raw > _CLAMP) & (g_raw < 1.0 - _CLAMP)
        g_n = np.clip(g_raw, _CLAMP, 1.0 - _CLAMP)
        dkl = np.where(
            active, -cfg.gamma / g_n + (1.0 - cfg.gamma) / (1.0 - g_n), 0.0
        )
        dh = dh + cfg.beta * dkl / n
    dh_pre = dh * h * (1.0 - h)
    dwe = batch.T @ dh_pre
    dbe = dh_pre.sum(axis=0)
    grad = np.concatenate([dwe.reshape(-1), dbe, dwd.reshape(-1), dbd])
    return mse + cfg.beta * kl, grad


@dataclass
class SaeModel:
    """Stacked encoder/decoder weights in training (shallow-to-deep) order."""

    enc_w: list
    enc_b: list
    dec_w: list
    dec_b: list

    @property
    def layer_sizes(self):
        return tuple([self.enc_w[0].shape[0]] + [w.shape[1] for w in self.enc_w])


def _check_width(m, x):
    if x.shape[-1] != m.enc_w[0].shape[0]:
        raise DimensionMismatchError(
            f"input width {x.shape[-1]} != model width {m.enc_w[0].shape[0]}"
        )


def encode(m, x):
    """Code vector (or batch) from stacked sigmoid encoders; values in (0, 1)."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(m, x)
    h = x
    for w, b in zip(m.enc_w, m.enc_b):
        h = sigmoid(h @ w + b)
    return h


def reconstruct(m, x):
    """Round trip through encoder and mirrored decoder."""
    return decode(m, encode(m, x))


def decode(m, h):
    for w, b in zip(reversed(m.dec_w), reversed(m.dec_b)):
        h = sigmoid(h @ w + b)
    return h


def reconstruct_all(m, X):
    """Row-wise reconstruct over a matrix; shape preserved.

    Applies reconstruct to one row at a time so the result is bit-identical
    to single-row calls (batched BLAS matmul rounds differently).
    """
    X = check_matrix(X, "X")
    out = np.empty_like(X)
    for i in range(X.shape[0]):
        out[i] = reconstruct(m, X[i])
    return out


def train_layerwise(X, cfg, rng):
    """Fit each depth on the previous depth's codes; returns (model, history).

    history[depth] is the per-epoch mean total loss for that layer's run.
    """
    X = check_matrix(X, "X")
    rng = ensure_rng(rng)
    sizes = cfg.layer_sizes or default_layer_sizes(X.shape[1])
    if sizes[0] != X.shape[1]:
        raise DimensionMismatchError(
            f"layer_sizes[0]={sizes[0]} != input width {X.shape[1]}"
        )
    enc_w, enc_b, dec_w, dec_b = [], [], [], []
    history = []
    current = X
    for depth, (d_in, d_h) in enumerate(zip(sizes[:-1], sizes[1:])):
        ae = SingleLayerAe.init(d_in, d_h, rng.child(f"layer{depth}/init"))
        params = ae.to_flat()
        state = AdamState.fresh(params.shape[0], lr=cfg.lr)
        epoch_losses = []
        n = current.shape[0]
        for epoch in range(cfg.epochs):
            order = rng.child(f"layer{depth}/epoch{epoch}").permutation(n)
            losses = []
            for start in range(0, n, cfg.batch_size):
                batch = current[order[start : start + cfg.batch_size]]
                ae = SingleLayerAe.from_flat(params, d_in, d_h)
                loss, grad = layer_loss_grad(ae, batch, cfg)
                if not np.isfinite(loss):
                    raise NonFiniteError(
                        f"non-finite loss at layer {depth}, epoch {epoch}"
                    )
                params, state = adam_step(state, params, grad)
                losses.append(loss)
            epoch_losses.append(float(np.mean(losses)))
        ae = SingleLayerAe.from_flat(params, d_in, d_h)
        enc_w.append(ae.we.copy())
        enc_b.append(ae.be.copy())
        dec_w.append(ae.wd.copy())
        dec_b.append(ae.bd.copy())
        history.append(epoch_losses)
        current = sigmoid(current @ ae.we + ae.be)
    return SaeModel(enc_w, enc_b, dec_w, dec_b), history


class SparseAutoencoder(TransformerMixin, BaseEstimator):
    """Estimator facade: fit trains the stack, transform reconstructs.

    Inputs are expected in [0, 1] (divide 0-255 features by 255 first).
    """

    def __init__(self, layer_sizes=None, gamma=0.05, beta=1.0, lr=1e-3,
                 epochs=15, batch_size=32, rng=None):
        self.layer_sizes = layer_sizes
        self.gamma = gamma
        self.beta = beta
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.rng = rng

    def _config(self):
        return SaeConfig(
            layer_sizes=self.layer_sizes,
            gamma=self.gamma,
            beta=self.beta,
            lr=self.lr,
            epochs=self.epochs,
            batch_size=self.batch_size,
        )

    def fit(self, X, y=None):
        self.model_, self.history_ = train_layerwise(
            X, self._config(), ensure_rng(self.rng).child("fit")
        )
        return self

    def transform(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("SparseAutoencoder is not fitted")
        return reconstruct_all(self.model_, X)

    def encode(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("SparseAutoencoder is not fitted")
        return encode(self.model_, np.asarray(X, dtype=np.float64))
