"""Batch command line: run the pipeline, run one stage, synthesize data,
or evaluate a checkpoint against a CSV.

Exit codes: 0 success, 2 config/usage errors, 3 input data errors,
4 checkpoint errors, 1 anything else.  Progress goes to stderr; timestamped
logs land in <out>/run.log; all data artifacts are plain files.
"""

import logging
import os
import sys

import click
import numpy as np

from . import checkpoint as ckpt
from . import stages
from .boost import score_inputs, FoldModels, _mode_name
from .config import PipelineConfig, parse_config
from .errors import (
    BadMagicError,
    ChecksumFailError,
    InvalidValueError,
    MissingLabelColumnError,
    ParseError,
    UnknownKeyError,
    UnmappableLabelError,
    VersionMismatchError,
)
from .metrics import auc_score
from .preprocess import load_csv, preprocess_table
from .synth import generate_synthetic

_CONFIG_ERRORS = (UnknownKeyError, InvalidValueError)
_DATA_ERRORS = (
    FileNotFoundError,
    ParseError,
    MissingLabelColumnError,
    UnmappableLabelError,
)
_CKPT_ERRORS = (BadMagicError, VersionMismatchError, ChecksumFailError)


def _exit_code(exc):
    if isinstance(exc, _CONFIG_ERRORS):
        return 2
    if isinstance(exc, _DATA_ERRORS):
        return 3
    if isinstance(exc, _CKPT_ERRORS):
        return 4
    return 1


def _setup_logging(out_dir):
    logger = logging.getLogger("cbcnn")
    logger.setLevel(logging.INFO)
    logger.handlers.clear()
    os.makedirs(out_dir, exist_ok=True)
    file_handler = logging.FileHandler(os.path.join(out_dir, "run.log"))
    file_handler.setFormatter(
        logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    )
    logger.addHandler(file_handler)
    stream = logging.StreamHandler(sys.stderr)
    stream.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(stream)
    return logger


def _load_config(config_path, seed, jobs, out):
    overrides = []
    if seed is not None:
        overrides.append(("seed", seed))
    if jobs is not None:
        overrides.append(("cv.jobs", jobs))
    if out is not None:
        overrides.append(("out.dir", out))
    if config_path is None:
        cfg = PipelineConfig()
        for key, value in overrides:
            from .config import apply_key

            apply_key(cfg, key, str(value))
        return cfg
    return parse_config(config_path, overrides)


def _common_options(fn):
    fn = click.option("--seed", type=int, default=None, help="Override the seed.")(fn)
    fn = click.option("--jobs", type=int, default=None, help="Fold-level workers.")(fn)
    fn = click.option("--out", type=str, default=None, help="Output directory.")(fn)
    return fn


@click.group()
def main():
    """Channel-boosted CNN pipeline for imbalanced tabular data."""


@main.command()
@click.option("-c", "--config", "config_path", required=True,
              type=click.Path(), help="Config file.")
@_common_options
def run(config_path, seed, jobs, out):
    """Run the full cross-validated pipeline and write the report."""
    try:
        cfg = _load_config(config_path, seed, jobs, out)
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        click.echo(f"config error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    _setup_logging(cfg.out_dir)
    try:
        report = stages.run_pipeline(cfg)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"pipeline error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    click.echo(report.to_text(), nl=False)


@main.command()
@click.argument("name")
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@click.option("--fold", type=int, default=0, show_default=True)
@_common_options
def stage(name, config_path, fold, seed, jobs, out):
    """Run exactly one pipeline stage (preprocess, balance, pca, encode,
    train-sae, pretrain, train, eval)."""
    if name not in stages.STAGE_NAMES:
        click.echo(
            f"unknown stage {name!r}; expected one of {', '.join(stages.STAGE_NAMES)}",
            err=True,
        )
        sys.exit(2)
    try:
        cfg = _load_config(config_path, seed, jobs, out)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"config error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    _setup_logging(cfg.out_dir)
    try:
        stages.run_stage(cfg, name, fold)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"stage {name} (fold {fold}) error: {exc}", err=True)
        sys.exit(_exit_code(exc))


@main.command()
@click.option("-c", "--config", "config_path", required=True, type=click.Path())
@_common_options
def synth(config_path, seed, jobs, out):
    """Generate the synthetic dataset described by the synth.* keys."""
    try:
        cfg = _load_config(config_path, seed, jobs, out)
        path = generate_synthetic(cfg)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"synth error: {exc}", err=True)
        sys.exit(_exit_code(exc))
    click.echo(f"wrote {path}", err=True)


@main.command("eval")
@click.option("-m", "--model", "model_path", required=True, type=click.Path())
@click.option("-d", "--data", "data_path", required=True, type=click.Path())
@click.option("-c", "--config", "config_path", default=None, type=click.Path())
@_common_options
def eval_cmd(model_path, data_path, config_path, seed, jobs, out):
    """Score a checkpointed fold model against a CSV."""
    try:
        cfg = _load_config(config_path, seed, jobs, out)
        sections = ckpt.load_checkpoint(model_path)
        models = FoldModels(
            mode=_mode_name(sections["meta/mode"]),
            pca=ckpt.unpack_pca(sections, "pca"),
            encoder=ckpt.unpack_encoder(sections, "enc"),
            sae=(
                ckpt.unpack_sae(sections, "sae") if "sae/depth" in sections else None
            ),
            net=ckpt.unpack_network(sections, "net"),
        )
        table = load_csv(
            data_path,
            cfg.label_column,
            positive_label=cfg.positive_label,
            negative_label=cfg.negative_label,
            missing_markers=cfg.missing_markers,
        )
        fm = preprocess_table(table, cfg.sparse_threshold)
        overall = auc_score(score_inputs(models, fm.X), fm.y)
        click.echo(f"overall_auc: {repr(overall)}")
        if "fold/test_idx" in sections:
            # transform exactly the recorded test rows so the scores replay
            # the training-time computation bit for bit
            test_idx = np.asarray(sections["fold/test_idx"])
            fold_scores = score_inputs(models, fm.X[test_idx])
            fold_auc = auc_score(fold_scores, fm.y[test_idx])
            click.echo(f"fold_test_auc: {repr(fold_auc)}")
            click.echo(f"recorded_fold_auc: {repr(float(sections['fold/auc'][0]))}")
    except Exception as exc:  # noqa: BLE001
        click.echo(f"eval error: {exc}", err=True)
        sys.exit(_exit_code(exc))


if __name__ == "__main__":
    main()
