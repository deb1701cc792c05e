"""File-backed pipeline stages.

Each stage reads its inputs from the output directory, computes one step,
and persists its result, so `run` is literally the stage sequence and
composing stages by hand reproduces the monolithic run byte for byte.
Randomness is derived from the config seed with fixed labels per stage and
fold, never from execution order.
"""

import logging
import os
import shutil

import numpy as np

from . import checkpoint as ckpt
from .boost import (
    balance_step,
    boosted_inputs,
    encoder_step,
    prepare_source,
    reduce_step,
    sae_step,
    tl_stage1,
    tl_stage2,
    _cnn_inputs,
    _mode_name,
)
from .errors import InvalidValueError
from .imaging import write_pnm
from .metrics import CvReport, FoldScore, accuracy, auc, kfold, roc, roc_csv
from .preprocess import FeatureMatrix, load_csv, preprocess_table
from .rng import RngStream

log = logging.getLogger("cbcnn")

STAGE_NAMES = (
    "preprocess",
    "balance",
    "pca",
    "encode",
    "train-sae",
    "pretrain",
    "train",
    "eval",
)


def _path(cfg, name):
    return os.path.join(cfg.out_dir, name)


def _root(cfg):
    return RngStream(cfg.seed)


def _fold_rng(cfg, fold):
    return _root(cfg).child(f"fold{fold}")


def write_effective_config(cfg):
    os.makedirs(cfg.out_dir, exist_ok=True)
    with open(_path(cfg, "effective.cfg"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())


def _load_features(cfg):
    sections = ckpt.load_checkpoint(_path(cfg, "preprocess.ckpt"))
    names = sections["meta/feature_names"].split("\n")
    return FeatureMatrix(sections["data/X"], sections["data/y"], names)


def stage_preprocess(cfg):
    """CSV -> cleaned FeatureMatrix, persisted as preprocess.ckpt."""
    if not os.path.exists(cfg.data_path):
        raise FileNotFoundError(f"data file {cfg.data_path!r} not found")
    table = load_csv(
        cfg.data_path,
        cfg.label_column,
        positive_label=cfg.positive_label,
        negative_label=cfg.negative_label,
        missing_markers=cfg.missing_markers,
    )
    fm = preprocess_table(table, cfg.sparse_threshold)
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckpt.save_checkpoint(
        _path(cfg, "preprocess.ckpt"),
        {
            "meta/kind": "preprocess",
            "meta/fingerprint": cfg.config_fingerprint,
            "meta/feature_names": "\n".join(fm.feature_names),
            "data/X": fm.X,
            "data/y": fm.y,
        },
    )
    log.info("preprocess: %d rows, %d features", fm.X.shape[0], fm.X.shape[1])
    return fm


def stage_pretrain(cfg):
    """Train the shared source-task network once per run."""
    fm = _load_features(cfg)
    net, history = prepare_source(fm, cfg, _root(cfg).child("pretrain"))
    sections = {
        "meta/kind": "pretrain",
        "meta/fingerprint": cfg.config_fingerprint,
    }
    sections.update(ckpt.pack_network("net", net))
    ckpt.save_checkpoint(_path(cfg, "pretrain.ckpt"), sections)
    with open(_path(cfg, "history_pretrain.csv"), "w", encoding="utf-8") as fh:
        fh.write(history.to_csv())
    log.info("pretrain: %d epochs done", len(history.epochs))
    return net


def stage_balance(cfg, fold):
    """Assign folds and SMOTE this fold's training rows."""
    fm = _load_features(cfg)
    assignment = kfold(fm.y, cfg.cv_folds, _root(cfg).child("folds"))
    test_idx = np.nonzero(assignment == fold)[0]
    train_idx = np.nonzero(assignment != fold)[0]
    balanced, base, neighbor = balance_step(
        fm, train_idx, cfg, _fold_rng(cfg, fold).child("smote")
    )
    ckpt.save_checkpoint(
        _path(cfg, f"balance_fold{fold}.ckpt"),
        {
            "meta/kind": "balance",
            "meta/fingerprint": cfg.config_fingerprint,
            "fold/assignment": assignment,
            "fold/train_idx": train_idx,
            "fold/test_idx": test_idx,
            "data/X": balanced.X,
            "data/y": balanced.y,
            "synth/base": base,
            "synth/neighbor": neighbor,
        },
    )
    log.info(
        "balance fold %d: %d train rows -> %d after SMOTE",
        fold, train_idx.shape[0], balanced.X.shape[0],
    )
    return balanced


def stage_pca(cfg, fold):
    """Fit PCA on the balanced training rows, transform train and test."""
    fm = _load_features(cfg)
    bal = ckpt.load_checkpoint(_path(cfg, f"balance_fold{fold}.ckpt"))
    pca = reduce_step(bal["data/X"], cfg)
    z_train = pca.transform(bal["data/X"])
    z_test = pca.transform(fm.X[bal["fold/test_idx"]])
    sections = {
        "meta/kind": "pca",
        "meta/fingerprint": cfg.config_fingerprint,
    }
    sections.update(ckpt.pack_pca("pca", pca))
    sections["data/z_train"] = z_train
    sections["data/z_test"] = z_test
    ckpt.save_checkpoint(_path(cfg, f"pca_fold{fold}.ckpt"), sections)
    log.info("pca fold %d: %d components", fold, z_train.shape[1])
    return pca


def stage_encode(cfg, fold):
    """Fit the image encoder on training features; persist normalized rows."""
    pca_s = ckpt.load_checkpoint(_path(cfg, f"pca_fold{fold}.ckpt"))
    enc = encoder_step(pca_s["data/z_train"], cfg)
    f_train = enc.normalize(pca_s["data/z_train"])
    f_test = enc.normalize(pca_s["data/z_test"])
    sections = {
        "meta/kind": "encode",
        "meta/fingerprint": cfg.config_fingerprint,
    }
    sections.update(ckpt.pack_encoder("enc", enc))
    sections["data/f_train"] = f_train
    sections["data/f_test"] = f_test
    ckpt.save_checkpoint(_path(cfg, f"encode_fold{fold}.ckpt"), sections)
    if cfg.image_export > 0:
        images = enc.images_from_normalized(f_train[: cfg.image_export])
        for i in range(images.shape[0]):
            write_pnm(images[i], _path(cfg, f"debug_fold{fold}_img{i}.pnm"))
    log.info("encode fold %d: layout %s", fold, enc.layout_)
    return enc


def stage_train_sae(cfg, fold):
    """Train the auxiliary reconstruction model on training features."""
    if _mode_name(cfg.mode) == "plain":
        raise InvalidValueError("train-sae does not apply to boost.mode = plain")
    enc_s = ckpt.load_checkpoint(_path(cfg, f"encode_fold{fold}.ckpt"))
    model, history = sae_step(
        enc_s["data/f_train"], cfg, _fold_rng(cfg, fold).child("sae")
    )
    sections = {
        "meta/kind": "sae",
        "meta/fingerprint": cfg.config_fingerprint,
    }
    sections.update(ckpt.pack_sae("sae", model))
    ckpt.save_checkpoint(_path(cfg, f"sae_fold{fold}.ckpt"), sections)
    lines = ["layer,epoch,loss"]
    for layer, losses in enumerate(history):
        for epoch, loss in enumerate(losses):
            lines.append(f"{layer},{epoch},{repr(loss)}")
    with open(_path(cfg, f"history_sae_fold{fold}.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    log.info("train-sae fold %d: widths %s", fold, model.layer_sizes)
    return model


def stage_train(cfg, fold):
    """Boost channels, run both transfer-learning stages, score the fold."""
    fm = _load_features(cfg)
    bal = ckpt.load_checkpoint(_path(cfg, f"balance_fold{fold}.ckpt"))
    enc_s = ckpt.load_checkpoint(_path(cfg, f"encode_fold{fold}.ckpt"))
    enc = ckpt.unpack_encoder(enc_s, "enc")
    mode = _mode_name(cfg.mode)
    sae_model = None
    if mode != "plain":
        sae_model = ckpt.unpack_sae(
            ckpt.load_checkpoint(_path(cfg, f"sae_fold{fold}.ckpt")), "sae"
        )
    source = ckpt.unpack_network(
        ckpt.load_checkpoint(_path(cfg, "pretrain.ckpt")), "net"
    )
    x_train = boosted_inputs(enc, sae_model, enc_s["data/f_train"], mode)
    x_test = boosted_inputs(enc, sae_model, enc_s["data/f_test"], mode)
    fold_rng = _fold_rng(cfg, fold)
    net, hist1 = tl_stage1(
        source, x_train, bal["data/y"], cfg.stage1, fold_rng.child("stage1")
    )
    net, hist2 = tl_stage2(
        net, x_train, bal["data/y"], cfg.stage2, fold_rng.child("stage2")
    )
    scores = net.forward(_cnn_inputs(x_test))[:, 1]
    y_test = fm.y[bal["fold/test_idx"]]
    fold_auc = auc(roc(scores, y_test))
    fold_acc = accuracy(scores, y_test)

    pca_s = ckpt.load_checkpoint(_path(cfg, f"pca_fold{fold}.ckpt"))
    sections = {
        "meta/kind": "fold",
        "meta/fingerprint": cfg.config_fingerprint,
        "meta/mode": mode,
        "fold/test_idx": bal["fold/test_idx"],
        "fold/fit_idx": bal["fold/train_idx"],
        "fold/scores": scores,
        "fold/auc": np.array([fold_auc]),
        "fold/accuracy": np.array([fold_acc]),
        "synth/base": bal["synth/base"],
        "synth/neighbor": bal["synth/neighbor"],
    }
    sections.update(ckpt.pack_pca("pca", ckpt.unpack_pca(pca_s, "pca")))
    sections.update(ckpt.pack_encoder("enc", enc))
    if sae_model is not None:
        sections.update(ckpt.pack_sae("sae", sae_model))
    sections.update(ckpt.pack_network("net", net))
    if hist2.final_state is not None:
        sections.update(ckpt.pack_adam("adam", hist2.final_state))
    ckpt.save_checkpoint(_path(cfg, f"fold{fold}.ckpt"), sections)
    for name, hist in (("stage1", hist1), ("stage2", hist2)):
        with open(
            _path(cfg, f"history_{name}_fold{fold}.csv"), "w", encoding="utf-8"
        ) as fh:
            fh.write(hist.to_csv())
    log.info("train fold %d: auc=%.4f accuracy=%.4f", fold, fold_auc, fold_acc)
    return fold_auc


def stage_eval(cfg):
    """Aggregate fold checkpoints into the CV report and ROC exports."""
    fm = _load_features(cfg)
    folds = []
    best = None
    for fold in range(cfg.cv_folds):
        sections = ckpt.load_checkpoint(_path(cfg, f"fold{fold}.ckpt"))
        scores = sections["fold/scores"]
        test_idx = sections["fold/test_idx"]
        curve = roc(scores, fm.y[test_idx])
        score = FoldScore(
            fold=fold,
            auc=float(sections["fold/auc"][0]),
            accuracy=float(sections["fold/accuracy"][0]),
            curve=curve,
            test_indices=test_idx,
            fit_indices=sections["fold/fit_idx"],
        )
        folds.append(score)
        with open(_path(cfg, f"roc_fold{fold}.csv"), "w", encoding="utf-8") as fh:
            fh.write(roc_csv(curve))
        if best is None or score.auc > folds[best].auc:
            best = fold
    report = CvReport(folds, cfg.config_fingerprint)
    with open(_path(cfg, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    shutil.copyfile(_path(cfg, f"fold{best}.ckpt"), _path(cfg, "model.ckpt"))
    log.info("eval: mean auc %.4f (std %.4f)", report.mean_auc, report.std_auc)
    return report


def run_fold(cfg, fold):
    """All per-fold stages in order (the unit of fold-level parallelism)."""
    stage_balance(cfg, fold)
    stage_pca(cfg, fold)
    stage_encode(cfg, fold)
    if _mode_name(cfg.mode) != "plain":
        stage_train_sae(cfg, fold)
    stage_train(cfg, fold)


def run_pipeline(cfg):
    """The monolithic run: every stage in sequence, optional fold parallelism."""
    write_effective_config(cfg)
    stage_preprocess(cfg)
    stage_pretrain(cfg)
    if cfg.jobs > 1:
        import concurrent.futures as cf
        import multiprocessing as mp

        context = mp.get_context("spawn")
        with cf.ProcessPoolExecutor(cfg.jobs, mp_context=context) as pool:
            futures = [
                pool.submit(run_fold, cfg, fold) for fold in range(cfg.cv_folds)
            ]
            for future in futures:
                future.result()
    else:
        for fold in range(cfg.cv_folds):
            run_fold(cfg, fold)
    return stage_eval(cfg)


def run_stage(cfg, name, fold=0):
    """Dispatch a single named stage."""
    write_effective_config(cfg)
    if name == "preprocess":
        return stage_preprocess(cfg)
    if name == "balance":
        return stage_balance(cfg, fold)
    if name == "pca":
        return stage_pca(cfg, fold)
    if name == "encode":
        return stage_encode(cfg, fold)
    if name == "train-sae":
        return stage_train_sae(cfg, fold)
    if name == "pretrain":
        return stage_pretrain(cfg)
    if name == "train":
        return stage_train(cfg, fold)
    if name == "eval":
        return stage_eval(cfg)
    raise InvalidValueError(
        f"unknown stage {name!r}; expected one of {', '.join(STAGE_NAMES)}"
    )
