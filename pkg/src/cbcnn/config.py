"""Pipeline configuration: defaults, key=value file parsing, canonical echo.

Config files are line-oriented `key = value` with '#' comments.  Unknown
keys are rejected; missing keys take the documented defaults.  The echoed
canonical text (every key, declaration order) is what gets fingerprinted.
"""

import copy
from dataclasses import dataclass, field

from .errors import InvalidValueError, UnknownKeyError
from .metrics import fingerprint
from .optim import TrainConfig


def _parse_int(key, value, lo=None, hi=None):
    try:
        v = int(value)
    except ValueError:
        raise InvalidValueError(f"{key}: {value!r} is not an integer") from None
    if lo is not None and v < lo:
        raise InvalidValueError(f"{key}: must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise InvalidValueError(f"{key}: must be <= {hi}, got {v}")
    return v


def _parse_float(key, value, lo=None, lo_open=None, hi=None, hi_open=None):
    try:
        v = float(value)
    except ValueError:
        raise InvalidValueError(f"{key}: {value!r} is not a number") from None
    if lo is not None and v < lo:
        raise InvalidValueError(f"{key}: must be >= {lo}, got {v}")
    if lo_open is not None and v <= lo_open:
        raise InvalidValueError(f"{key}: must be > {lo_open}, got {v}")
    if hi is not None and v > hi:
        raise InvalidValueError(f"{key}: must be <= {hi}, got {v}")
    if hi_open is not None and v >= hi_open:
        raise InvalidValueError(f"{key}: must be < {hi_open}, got {v}")
    return v


def _parse_bool(key, value):
    low = value.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise InvalidValueError(f"{key}: {value!r} is not a boolean")


def _parse_mode(key, value):
    low = value.lower()
    if low not in ("plain", "replace", "stack"):
        raise InvalidValueError(f"{key}: must be plain, replace or stack")
    return low


def _parse_layers(key, value):
    if value.strip() in ("", "auto"):
        return None
    try:
        sizes = tuple(int(tok) for tok in value.split(","))
    except ValueError:
        raise InvalidValueError(f"{key}: expected comma-separated integers") from None
    if any(s < 1 for s in sizes) or len(sizes) < 2:
        raise InvalidValueError(f"{key}: need >= 2 widths, all >= 1")
    return sizes


def _parse_markers(key, value):
    if value == "":
        return ()
    return tuple(tok.strip() for tok in value.split(","))


@dataclass
class PipelineConfig:
    seed: int = 42
    out_dir: str = "out"
    data_path: str = ""
    label_column: str = "label"
    positive_label: str = "1"
    negative_label: str = "0"
    missing_markers: tuple = ()
    sparse_threshold: float = 0.9
    cv_folds: int = 5
    jobs: int = 1
    smote_k: int = 5
    smote_ratio: float = 1.0
    smote_standardize: bool = True
    pca_components: int = 60
    pca_standardize: bool = True
    image_channels: int = 3
    image_out: int = 32
    image_export: int = 0
    sae_layers: tuple = None
    sae_gamma: float = 0.05
    sae_beta: float = 1.0
    sae_lr: float = 1e-3
    sae_epochs: int = 15
    sae_batch: int = 32
    inception_repeats: int = 1
    mode: str = "stack"
    pretrain_n: int = 1200
    pretrain: TrainConfig = field(
        default_factory=lambda: TrainConfig(batch_size=20, lr=1e-4, epochs=50)
    )
    stage1: TrainConfig = field(
        default_factory=lambda: TrainConfig(batch_size=20, lr=1e-4, epochs=50)
    )
    stage2: TrainConfig = field(
        default_factory=lambda: TrainConfig(batch_size=20, lr=1e-4, epochs=50)
    )
    synth_n: int = 2800
    synth_features: int = 60
    synth_ratio: float = 13.0
    synth_categorical: float = 0.1
    synth_missing: float = 0.02
    synth_shift: float = 0.3

    def with_mode(self, mode):
        from .boost import _mode_name

        cfg = copy.deepcopy(self)
        cfg.mode = _mode_name(mode)
        return cfg

    def to_text(self):
        lines = [f"{key} = {getter(self)}" for key, getter, _ in _KEYS]
        return "\n".join(lines) + "\n"

    @property
    def config_fingerprint(self):
        """Hash of the effective config, minus keys that cannot change the
        computation (output directory, worker count)."""
        lines = [
            line
            for line in self.to_text().splitlines()
            if not line.startswith(("out.dir =", "cv.jobs ="))
        ]
        return fingerprint("\n".join(lines) + "\n")


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _attr(name):
    return (
        lambda cfg: _fmt(getattr(cfg, name)),
        lambda cfg, v: setattr(cfg, name, v),
    )


def _stage_attr(stage, name):
    return (
        lambda cfg: _fmt(getattr(getattr(cfg, stage), name)),
        lambda cfg, v: setattr(getattr(cfg, stage), name, v),
    )


def _key(key, getset, parser):
    getter, setter = getset
    return (key, getter, (setter, parser))


_KEYS = [
    _key("seed", _attr("seed"), lambda k, v: _parse_int(k, v, lo=0)),
    _key("out.dir", _attr("out_dir"), lambda k, v: v),
    _key("data.path", _attr("data_path"), lambda k, v: v),
    _key("data.label_column", _attr("label_column"), lambda k, v: v),
    _key("data.positive_label", _attr("positive_label"), lambda k, v: v),
    _key("data.negative_label", _attr("negative_label"), lambda k, v: v),
    _key("data.missing_markers", _attr("missing_markers"), _parse_markers),
    _key(
        "data.sparse_threshold",
        _attr("sparse_threshold"),
        lambda k, v: _parse_float(k, v, lo_open=0.0, hi=1.0),
    ),
    _key("cv.folds", _attr("cv_folds"), lambda k, v: _parse_int(k, v, lo=2)),
    _key("cv.jobs", _attr("jobs"), lambda k, v: _parse_int(k, v, lo=1)),
    _key("smote.k", _attr("smote_k"), lambda k, v: _parse_int(k, v, lo=1)),
    _key(
        "smote.ratio",
        _attr("smote_ratio"),
        lambda k, v: _parse_float(k, v, lo_open=0.0),
    ),
    _key("smote.standardize", _attr("smote_standardize"), _parse_bool),
    _key("pca.components", _attr("pca_components"), lambda k, v: _parse_int(k, v, lo=1)),
    _key("pca.standardize", _attr("pca_standardize"), _parse_bool),
    _key("image.channels", _attr("image_channels"), lambda k, v: _parse_int(k, v, lo=1)),
    _key("image.out", _attr("image_out"), lambda k, v: _parse_int(k, v, lo=1)),
    _key("image.export", _attr("image_export"), lambda k, v: _parse_int(k, v, lo=0)),
    _key("sae.layers", _attr("sae_layers"), _parse_layers),
    _key(
        "sae.gamma",
        _attr("sae_gamma"),
        lambda k, v: _parse_float(k, v, lo_open=0.0, hi_open=1.0),
    ),
    _key("sae.beta", _attr("sae_beta"), lambda k, v: _parse_float(k, v, lo=0.0)),
    _key("sae.lr", _attr("sae_lr"), lambda k, v: _parse_float(k, v, lo_open=0.0)),
    _key("sae.epochs", _attr("sae_epochs"), lambda k, v: _parse_int(k, v, lo=0)),
    _key("sae.batch", _attr("sae_batch"), lambda k, v: _parse_int(k, v, lo=1)),
    _key(
        "cnn.inception_repeats",
        _attr("inception_repeats"),
        lambda k, v: _parse_int(k, v, lo=1),
    ),
    _key("boost.mode", _attr("mode"), _parse_mode),
    _key("pretrain.n", _attr("pretrain_n"), lambda k, v: _parse_int(k, v, lo=4)),
    _key(
        "pretrain.epochs",
        _stage_attr("pretrain", "epochs"),
        lambda k, v: _parse_int(k, v, lo=0),
    ),
    _key(
        "pretrain.lr",
        _stage_attr("pretrain", "lr"),
        lambda k, v: _parse_float(k, v, lo_open=0.0),
    ),
    _key(
        "pretrain.batch",
        _stage_attr("pretrain", "batch_size"),
        lambda k, v: _parse_int(k, v, lo=1),
    ),
    _key(
        "stage1.epochs",
        _stage_attr("stage1", "epochs"),
        lambda k, v: _parse_int(k, v, lo=0),
    ),
    _key(
        "stage1.lr",
        _stage_attr("stage1", "lr"),
        lambda k, v: _parse_float(k, v, lo_open=0.0),
    ),
    _key(
        "stage1.batch",
        _stage_attr("stage1", "batch_size"),
        lambda k, v: _parse_int(k, v, lo=1),
    ),
    _key(
        "stage2.epochs",
        _stage_attr("stage2", "epochs"),
        lambda k, v: _parse_int(k, v, lo=0),
    ),
    _key(
        "stage2.lr",
        _stage_attr("stage2", "lr"),
        lambda k, v: _parse_float(k, v, lo_open=0.0),
    ),
    _key(
        "stage2.batch",
        _stage_attr("stage2", "batch_size"),
        lambda k, v: _parse_int(k, v, lo=1),
    ),
    _key("synth.n", _attr("synth_n"), lambda k, v: _parse_int(k, v, lo=10)),
    _key(
        "synth.features", _attr("synth_features"), lambda k, v: _parse_int(k, v, lo=2)
    ),
    _key(
        "synth.ratio",
        _attr("synth_ratio"),
        lambda k, v: _parse_float(k, v, lo_open=0.0),
    ),
    _key(
        "synth.categorical",
        _attr("synth_categorical"),
        lambda k, v: _parse_float(k, v, lo=0.0, hi=1.0),
    ),
    _key(
        "synth.missing",
        _attr("synth_missing"),
        lambda k, v: _parse_float(k, v, lo=0.0, hi_open=1.0),
    ),
    _key("synth.shift", _attr("synth_shift"), lambda k, v: _parse_float(k, v)),
]

_SETTERS = {key: setpair for key, _, setpair in _KEYS}


def apply_key(cfg, key, value):
    if key not in _SETTERS:
        raise UnknownKeyError(f"unknown config key {key!r}")
    setter, parser = _SETTERS[key]
    setter(cfg, parser(key, value))


def parse_config(path, overrides=()):
    """Load a config file over the defaults; `overrides` are (key, value)
    pairs applied last (CLI flags)."""
    cfg = PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidValueError(f"line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            apply_key(cfg, key.strip(), value.strip())
    for key, value in overrides:
        apply_key(cfg, key, str(value))
    return cfg
