"""Channel boosting and the two-stage transfer-learning pipeline.

The auxiliary learner's reconstruction of each sample is encoded with the
same layout and normalization as the original features, producing auxiliary
channels that either replace the original channels or stack onto them.  A
source network pre-trained on a synthetic shifted-distribution task seeds
the classifier; stage 1 re-trains the dense head with the backbone frozen,
stage 2 fine-tunes everything.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .cnn import Network, mini_inception_arch
from .errors import SpatialMismatchError
from .imaging import ChurnImage, ImageEncoder, batch_resize, infer_layout
from .metrics import CvReport, FoldScore, accuracy, auc, kfold, roc
from .optim import TrainConfig, train
from .pca import PcaReducer
from .preprocess import FeatureMatrix
from .rng import ensure_rng
from .sae import SaeConfig, reconstruct_all, train_layerwise
from .smote import SmoteConfig, rebalance


class BoostMode(Enum):
    REPLACE = "replace"
    STACK = "stack"


def _mode_name(mode):
    if mode is None:
        return "plain"
    if isinstance(mode, BoostMode):
        return mode.value
    name = str(mode).lower()
    if name not in ("plain", "replace", "stack"):
        raise ValueError(f"unknown boost mode {mode!r}")
    return name


@dataclass
class BoostedImage:
    pixels: np.ndarray
    provenance: tuple  # "original" | "auxiliary" per channel


def boost(original, auxiliary, mode):
    """Combine one original and one auxiliary image per the boost mode."""
    orig = original.pixels if isinstance(original, ChurnImage) else np.asarray(original, dtype=np.float64)
    aux = auxiliary.pixels if isinstance(auxiliary, ChurnImage) else np.asarray(auxiliary, dtype=np.float64)
    pixels, prov = boost_batch(orig[None], aux[None], mode)
    return BoostedImage(pixels[0], prov)


def boost_batch(original, auxiliary, mode):
    """Vectorized boost over stacks (n, h, w, c); returns (pixels, provenance)."""
    if original.shape[:3] != auxiliary.shape[:3]:
        raise SpatialMismatchError(
            f"spatial dims differ: {original.shape[1:3]} vs {auxiliary.shape[1:3]}"
        )
    name = _mode_name(mode)
    if name == "replace":
        return auxiliary.copy(), ("auxiliary",) * auxiliary.shape[3]
    if name == "stack":
        prov = ("original",) * original.shape[3] + ("auxiliary",) * auxiliary.shape[3]
        return np.concatenate([original, auxiliary], axis=3), prov
    raise ValueError("plain mode has no auxiliary channels to combine")


def _cnn_inputs(images):
    # 0-255 pixels -> [0, 1] network inputs
    return np.asarray(images, dtype=np.float64) / 255.0


# ---------------------------------------------------------------------------
# source task and transfer-learning stages


def make_source_task(n, height, width, channels, rng):
    """Synthetic two-class image task from a distribution unlike the target.

    Each class gets a random smooth prototype; samples are the prototype
    plus pixel noise, clipped to [0, 255].  Labels alternate.
    """
    rng = ensure_rng(rng)
    coarse = rng.uniform_array(0.0, 1.0, (2, 4, 4, channels))
    protos = batch_resize(coarse, height, width) * 160.0 + 48.0
    labels = np.arange(n, dtype=np.int64) % 2
    noise = rng.normal((n, height, width, channels)) * 25.0
    images = np.clip(protos[labels] + noise, 0.0, 255.0)
    return images, labels


def pretrain_source(arch, source_images, source_labels, cfg, rng):
    """Train a fresh network on the source task to seed transfer learning."""
    rng = ensure_rng(rng)
    net = Network(arch, source_images.shape[1:]).initialized(rng.child("init"))
    net, history = train(
        net, _cnn_inputs(source_images), source_labels, cfg, rng.child("train")
    )
    return net, history


def tl_stage1(net, images, labels, cfg, rng):
    """Re-initialize and train the dense head with the backbone frozen.

    The backbone is bit-identical afterwards; since its outputs are constant,
    features are extracted once and the head trains as a small network on
    them, which matches masked full-network training exactly.
    """
    rng = ensure_rng(rng)
    net = net.reinit_head(rng.child("head_init"))
    if cfg.epochs == 0:
        from .optim import TrainHistory

        return net, TrainHistory()
    feats = net.features(_cnn_inputs(images))
    head = net.head_network()
    head_cfg = TrainConfig(
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        epochs=cfg.epochs,
        val_fraction=cfg.val_fraction,
    )
    head, history = train(head, feats, labels, head_cfg, rng.child("train"))
    return net.with_head_params(head.params), history


def tl_stage2(net, images, labels, cfg, rng):
    """Fine-tune every parameter on the (possibly boosted) target images."""
    rng = ensure_rng(rng)
    full_cfg = TrainConfig(
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        epochs=cfg.epochs,
        val_fraction=cfg.val_fraction,
    )
    return train(net, _cnn_inputs(images), labels, full_cfg, rng.child("train"))


# ---------------------------------------------------------------------------
# per-fold pipeline steps (shared by the API pipeline and the staged CLI)


@dataclass
class FoldModels:
    mode: str
    pca: PcaReducer
    encoder: ImageEncoder
    sae: object  # SaeModel or None in plain mode
    net: Network


@dataclass
class FoldResult:
    fold: int
    models: FoldModels
    score: FoldScore
    scores: np.ndarray
    histories: dict
    synth_base: np.ndarray
    synth_neighbor: np.ndarray


def balance_step(fm, train_idx, pipe_cfg, rng):
    """SMOTE the training rows of one fold; returns the balanced matrix and
    the synthetic provenance mapped to original row ids."""
    sub = FeatureMatrix(fm.X[train_idx], fm.y[train_idx], list(fm.feature_names))
    cfg = SmoteConfig(
        k=pipe_cfg.smote_k,
        target_ratio=pipe_cfg.smote_ratio,
        standardize=pipe_cfg.smote_standardize,
        rng=rng,
    )
    balanced, batch = rebalance(sub, cfg)
    base = np.asarray(train_idx)[batch.base]
    neighbor = np.asarray(train_idx)[batch.neighbor]
    return balanced, base, neighbor


def reduce_step(X_train, pipe_cfg):
    return PcaReducer(pipe_cfg.pca_components, pipe_cfg.pca_standardize).fit(X_train)


def encoder_step(Z_train, pipe_cfg):
    layout = infer_layout(Z_train.shape[1], pipe_cfg.image_channels)
    enc = ImageEncoder(layout, pipe_cfg.image_out, pipe_cfg.image_out)
    return enc.fit(Z_train)


def sae_step(F_train, pipe_cfg, rng):
    """Train the auxiliary learner on normalized train features (as [0,1])."""
    cfg = SaeConfig(
        layer_sizes=pipe_cfg.sae_layers,
        gamma=pipe_cfg.sae_gamma,
        beta=pipe_cfg.sae_beta,
        lr=pipe_cfg.sae_lr,
        epochs=pipe_cfg.sae_epochs,
        batch_size=pipe_cfg.sae_batch,
    )
    return train_layerwise(F_train / 255.0, cfg, rng)


def boosted_inputs(encoder, sae_model, F, mode):
    """Build network input images from normalized features for one fold.

    plain -> original channels only; replace -> auxiliary only; stack ->
    original followed by auxiliary.
    """
    name = _mode_name(mode)
    originals = encoder.images_from_normalized(F)
    if name == "plain":
        return originals
    recon = reconstruct_all(sae_model, F / 255.0) * 255.0
    aux = encoder.images_from_normalized(recon)
    pixels, _ = boost_batch(originals, aux, name)
    return pixels


def mode_channels(mode, layout_channels):
    return 2 * layout_channels if _mode_name(mode) == "stack" else layout_channels


def fit_fold(fm, train_idx, test_idx, source_net, pipe_cfg, fold_rng, fold_id=0):
    """Run one cross-validation fold end to end on training rows only."""
    mode = _mode_name(pipe_cfg.mode)
    balanced, base, neighbor = balance_step(
        fm, train_idx, pipe_cfg, fold_rng.child("smote")
    )
    pca = reduce_step(balanced.X, pipe_cfg)
    z_train = pca.transform(balanced.X)
    z_test = pca.transform(fm.X[test_idx])
    encoder = encoder_step(z_train, pipe_cfg)
    f_train = encoder.normalize(z_train)
    f_test = encoder.normalize(z_test)
    histories = {}
    sae_model = None
    if mode != "plain":
        sae_model, sae_hist = sae_step(f_train, pipe_cfg, fold_rng.child("sae"))
        histories["sae"] = sae_hist
    x_train = boosted_inputs(encoder, sae_model, f_train, mode)
    x_test = boosted_inputs(encoder, sae_model, f_test, mode)
    net, hist1 = tl_stage1(
        source_net, x_train, balanced.y, pipe_cfg.stage1, fold_rng.child("stage1")
    )
    net, hist2 = tl_stage2(
        net, x_train, balanced.y, pipe_cfg.stage2, fold_rng.child("stage2")
    )
    histories["stage1"] = hist1
    histories["stage2"] = hist2
    scores = net.forward(_cnn_inputs(x_test))[:, 1]
    curve = roc(scores, fm.y[test_idx])
    score = FoldScore(
        fold=fold_id,
        auc=auc(curve),
        accuracy=accuracy(scores, fm.y[test_idx]),
        curve=curve,
        test_indices=np.sort(np.asarray(test_idx)),
        fit_indices=np.sort(np.asarray(train_idx)),
    )
    models = FoldModels(mode, pca, encoder, sae_model, net)
    return FoldResult(fold_id, models, score, scores, histories, base, neighbor)


def score_inputs(models, X):
    """Class-1 probabilities for preprocessed feature rows under fold models."""
    z = models.pca.transform(X)
    f = models.encoder.normalize(z)
    images = boosted_inputs(models.encoder, models.sae, f, models.mode)
    return models.net.forward(_cnn_inputs(images))[:, 1]


def build_arch(pipe_cfg):
    return mini_inception_arch(n_classes=2, inception_repeats=pipe_cfg.inception_repeats)


def prepare_source(fm, pipe_cfg, rng):
    """Pre-train the shared source network once per run."""
    layout = infer_layout(
        min(pipe_cfg.pca_components, fm.X.shape[1]), pipe_cfg.image_channels
    )
    channels = mode_channels(pipe_cfg.mode, layout.channels)
    images, labels = make_source_task(
        pipe_cfg.pretrain_n,
        pipe_cfg.image_out,
        pipe_cfg.image_out,
        channels,
        rng.child("data"),
    )
    return pretrain_source(build_arch(pipe_cfg), images, labels, pipe_cfg.pretrain, rng)


def run_cb_pipeline(fm, mode, pipe_cfg, rng, fingerprint=""):
    """Stratified k-fold evaluation of the channel-boosted pipeline.

    Returns (network, CvReport, fold_results); the network is the fold
    winner by test AUC (lowest fold id on ties).
    """
    rng = ensure_rng(rng)
    pipe_cfg = pipe_cfg.with_mode(mode)
    assignment = kfold(fm.y, pipe_cfg.cv_folds, rng.child("folds"))
    source_net, _ = prepare_source(fm, pipe_cfg, rng.child("pretrain"))
    results = []
    for fold in range(pipe_cfg.cv_folds):
        test_idx = np.nonzero(assignment == fold)[0]
        train_idx = np.nonzero(assignment != fold)[0]
        results.append(
            fit_fold(
                fm, train_idx, test_idx, source_net, pipe_cfg,
                rng.child(f"fold{fold}"), fold,
            )
        )
    report = CvReport([r.score for r in results], fingerprint)
    best = max(results, key=lambda r: (r.score.auc, -r.fold))
    return best.models.net, report, results


class ChannelBoostedClassifier(ClassifierMixin, BaseEstimator):
    """Single-split estimator facade over the fold pipeline.

    fit() runs SMOTE -> PCA -> encoding -> auxiliary learner -> boosting ->
    two-stage transfer learning on the given training data; predict_proba()
    replays the fitted transforms.  `source_net` may carry a pre-trained
    network; otherwise one is trained on the synthetic source task.
    """

    def __init__(self, config=None, source_net=None, rng=None):
        self.config = config
        self.source_net = source_net
        self.rng = rng

    def fit(self, X, y):
        from .config import PipelineConfig

        cfg = self.config if self.config is not None else PipelineConfig()
        rng = ensure_rng(self.rng if self.rng is not None else cfg.seed)
        fm = FeatureMatrix(X, y)
        idx = np.arange(fm.X.shape[0])
        source = self.source_net
        if source is None:
            source, _ = prepare_source(fm, cfg, rng.child("pretrain"))
        result = fit_fold(fm, idx, idx, source, cfg, rng.child("fit"))
        self.models_ = result.models
        self.histories_ = result.histories
        self.classes_ = np.array([0, 1])
        return self

    def predict_proba(self, X):
        if not hasattr(self, "models_"):
            raise NotFittedError("ChannelBoostedClassifier is not fitted")
        p1 = score_inputs(self.models_, np.asarray(X, dtype=np.float64))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)
