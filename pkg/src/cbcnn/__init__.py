"""Channel-boosted CNN pipeline for imbalanced tabular classification."""

from .boost import (
    BoostMode,
    BoostedImage,
    ChannelBoostedClassifier,
    boost,
    run_cb_pipeline,
    tl_stage1,
    tl_stage2,
)
from .cnn import Conv, Dense, GlobalAvgPool, Inception, MaxPool, Network, Softmax, mini_inception_arch
from .config import PipelineConfig, parse_config
from .imaging import ImageEncoder, ImageLayout, resize_bilinear
from .linalg import sym_eig
from .metrics import CvReport, RocCurve, accuracy, auc, auc_score, kfold, roc
from .optim import AdamState, TrainConfig, adam_step, train
from .pca import PcaReducer
from .preprocess import FeatureMatrix, RawTable, load_csv, preprocess_table
from .rng import RngStream
from .sae import SaeConfig, SparseAutoencoder, kl_sparsity, train_layerwise
from .smote import SmoteConfig, k_nearest, rebalance

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BoostMode",
    "BoostedImage",
    "ChannelBoostedClassifier",
    "Conv",
    "CvReport",
    "Dense",
    "FeatureMatrix",
    "GlobalAvgPool",
    "ImageEncoder",
    "ImageLayout",
    "Inception",
    "MaxPool",
    "Network",
    "PcaReducer",
    "PipelineConfig",
    "RawTable",
    "RngStream",
    "RocCurve",
    "SaeConfig",
    "SmoteConfig",
    "Softmax",
    "SparseAutoencoder",
    "TrainConfig",
    "accuracy",
    "adam_step",
    "auc",
    "auc_score",
    "boost",
    "k_nearest",
    "kfold",
    "kl_sparsity",
    "load_csv",
    "mini_inception_arch",
    "parse_config",
    "preprocess_table",
    "rebalance",
    "resize_bilinear",
    "roc",
    "run_cb_pipeline",
    "sym_eig",
    "tl_stage1",
    "tl_stage2",
    "train",
    "train_layerwise",
]
