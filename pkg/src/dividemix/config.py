"""Experiment configuration: schema, defaults, YAML I/O and validation.

A config file is a YAML mapping with the sections below.  Every key is
optional; unknown keys are rejected.  Values left as ``null`` under
``hyper`` are resolved from the noise setting (see :func:`resolve`)::

    run_name: demo
    out_dir: runs
    data:     {source: blobs, n_classes: 4, dim: 16, n_train_per_class: 500,
               n_test_per_class: 250, separation: 6.0, seed: 0,
               cifar_train: null, cifar_test: null, subset: null}
    noise:    {kind: sym-excl, ratio: 0.5, seed: 1, asym_map: null}
    model:    {arch: mlp, hidden: [64, 64], cnn_channels: [16, 32], cnn_hidden: 128}
    optim:    {lr: 0.02, momentum: 0.9, weight_decay: 0.0005,
               lr_decay_epoch: 30, lr_decay_factor: 0.1}
    train:    {method: dividemix, epochs: 60, warmup_epochs: 5, batch_size: 64,
               seeds: [1, 2]}
    hyper:    {M: 2, T: 0.5, alpha: 4.0, lambda_u: null, lambda_r: 1.0, tau: null,
               confidence_penalty: null, penalty_weight: 1.0, aug_sigma: 0.1,
               rampup_epochs: 16}
    ablation: {self_divide: false, no_refinement: false, no_augmentation: false,
               plain_mixmatch: false, single_model_test: false}
    output:   {dump_divisions: true, checkpoints: false}
"""
import dataclasses
import typing
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import yaml

from .data import NOISE_KINDS, default_asym_map, validate_class_map
from .errors import ConfigError
from .mixmatch import HyperParams


@dataclass
class DataConfig:
    source: str = "blobs"
    n_classes: int = 4
    dim: int = 16
    n_train_per_class: int = 500
    n_test_per_class: int = 250
    separation: float = 6.0
    seed: int = 0
    cifar_train: Optional[list] = None
    cifar_test: Optional[list] = None
    subset: Optional[int] = None


@dataclass
class NoiseConfig:
    kind: str = "sym-excl"
    ratio: float = 0.5
    seed: int = 1
    asym_map: Optional[dict] = None


@dataclass
class ModelConfig:
    arch: str = "mlp"
    hidden: list = field(default_factory=lambda: [64, 64])
    cnn_channels: list = field(default_factory=lambda: [16, 32])
    cnn_hidden: int = 128


@dataclass
class OptimConfig:
    lr: float = 0.02
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_decay_epoch: int = 30
    lr_decay_factor: float = 0.1


@dataclass
class TrainSection:
    method: str = "dividemix"
    epochs: int = 60
    warmup_epochs: int = 5
    batch_size: int = 64
    seeds: list = field(default_factory=lambda: [1, 2])


@dataclass
class HyperSection:
    M: int = 2
    T: float = 0.5
    alpha: float = 4.0
    lambda_u: Optional[float] = None
    lambda_r: float = 1.0
    tau: Optional[float] = None
    confidence_penalty: Optional[bool] = None
    penalty_weight: float = 1.0
    aug_sigma: float = 0.1
    rampup_epochs: int = 16


@dataclass
class AblationFlags:
    self_divide: bool = False
    no_refinement: bool = False
    no_augmentation: bool = False
    plain_mixmatch: bool = False
    single_model_test: bool = False


@dataclass
class OutputConfig:
    dump_divisions: bool = True
    checkpoints: bool = False


@dataclass
class TrainConfig:
    run_name: str = "run"
    out_dir: str = "runs"
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    train: TrainSection = field(default_factory=TrainSection)
    hyper: HyperSection = field(default_factory=HyperSection)
    ablation: AblationFlags = field(default_factory=AblationFlags)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self):
        return asdict(self)

    def hyperparams(self):
        """The resolved :class:`~dividemix.mixmatch.HyperParams` for training."""
        cfg = resolve(self)
        h = cfg.hyper
        return HyperParams(M=h.M, T=h.T, alpha=h.alpha, lambda_u=h.lambda_u, lambda_r=h.lambda_r,
                           batch_size=cfg.train.batch_size, tau=h.tau,
                           warmup_epochs=cfg.train.warmup_epochs,
                           confidence_penalty=h.confidence_penalty,
                           penalty_weight=h.penalty_weight, aug_sigma=h.aug_sigma,
                           rampup_epochs=h.rampup_epochs)


ABLATION_ALIASES = {
    "single-network-self-divide": "self_divide",
    "no-co-training": "self_divide",
    "self-divide": "self_divide",
    "disable-label-refinement": "no_refinement",
    "no-refinement": "no_refinement",
    "disable-augmentation": "no_augmentation",
    "no-augmentation": "no_augmentation",
    "plain-divide-plus-mixmatch": "plain_mixmatch",
    "divide-and-mixmatch": "plain_mixmatch",
    "plain-mixmatch": "plain_mixmatch",
    "single-model-test": "single_model_test",
}


def parse_ablation(text):
    """Turn ``"no-refinement,single-model-test"`` into an :class:`AblationFlags`."""
    flags = AblationFlags()
    for name in filter(None, (t.strip() for t in text.split(","))):
        key = ABLATION_ALIASES.get(name, name.replace("-", "_"))
        if key not in {f.name for f in fields(AblationFlags)}:
            raise ConfigError(f"unknown ablation flag {name!r}", field="ablation")
        flags = replace(flags, **{key: True})
    return flags


def table8_lambda_u(kind, ratio, n_classes):
    """Published unsupervised loss weight for a CIFAR noise setting (0, 25, 50 or 150).

    These values weight a squared error averaged over classes as well as
    samples; :func:`resolve` divides by the class count before use.
    """
    if n_classes >= 100:
        return 25.0 if ratio <= 0.2 else 150.0
    if kind == "asym" or ratio <= 0.2:
        return 0.0
    if ratio <= 0.8:
        return 25.0
    return 50.0


def resolve(cfg):
    """Materialize automatic values; the result has no ``None`` in ``hyper``."""
    h = cfg.hyper
    n_classes = 10 if cfg.data.source == "cifar10" else cfg.data.n_classes
    lambda_u = h.lambda_u
    if lambda_u is None:
        # published weights pair with a class-averaged squared error; L_U here sums over classes
        lambda_u = table8_lambda_u(cfg.noise.kind, cfg.noise.ratio, n_classes) / n_classes
    tau = h.tau if h.tau is not None else (0.6 if cfg.noise.ratio >= 0.9 else 0.5)
    penalty = h.confidence_penalty
    if penalty is None:
        penalty = cfg.noise.kind == "asym"
    asym_map = cfg.noise.asym_map
    if cfg.noise.kind == "asym" and asym_map is None:
        asym_map = default_asym_map(n_classes)
    abl = cfg.ablation
    lambda_r = h.lambda_r
    if abl.plain_mixmatch:
        # the original MixMatch objective has no prior-matching term
        abl = replace(abl, self_divide=True, no_refinement=True)
        lambda_r = 0.0
    return replace(
        cfg,
        hyper=replace(h, lambda_u=float(lambda_u), lambda_r=float(lambda_r), tau=float(tau),
                      confidence_penalty=bool(penalty)),
        noise=replace(cfg.noise, asym_map=asym_map),
        ablation=abl,
    )


def _type_ok(value, tp):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        return any(_type_ok(value, a) for a in typing.get_args(tp))
    if tp is type(None):
        return value is None
    if tp is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tp is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, tp)


def _build(cls, data, path):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping", field=path or None)
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            full = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"unknown key {full!r}", field=full)
    kwargs = {}
    for name, f in known.items():
        if name not in data:
            continue
        full = f"{path}.{name}" if path else name
        value = data[name]
        if dataclasses.is_dataclass(f.default_factory if f.default_factory is not dataclasses.MISSING else None):
            kwargs[name] = _build(f.default_factory, value, full)
            continue
        if not _type_ok(value, f.type):
            raise ConfigError(f"{full}: expected {getattr(f.type, '__name__', f.type)}, got {value!r}",
                              field=full)
        kwargs[name] = float(value) if f.type is float else value
    return cls(**kwargs)


def from_dict(data):
    cfg = _build(TrainConfig, data, "")
    validate(cfg)
    return cfg


def validate(cfg):
    """Raise :class:`ConfigError` naming the first offending field."""
    def need(ok, fieldname, message):
        if not ok:
            raise ConfigError(f"{fieldname}: {message}", field=fieldname)

    d, n, m, o, t, h = cfg.data, cfg.noise, cfg.model, cfg.optim, cfg.train, cfg.hyper
    need(d.source in ("blobs", "cifar10"), "data.source", "must be 'blobs' or 'cifar10'")
    if d.source == "blobs":
        need(d.n_classes >= 2, "data.n_classes", "must be >= 2")
        need(d.n_classes <= d.dim, "data.n_classes", "cannot exceed data.dim for one-hot means")
        need(d.separation > 0, "data.separation", "must be > 0")
        need(d.n_train_per_class >= 1, "data.n_train_per_class", "must be >= 1")
        need(d.n_test_per_class >= 1, "data.n_test_per_class", "must be >= 1")
    else:
        need(bool(d.cifar_train), "data.cifar_train", "list of CIFAR-10 binary batch paths required")
        need(bool(d.cifar_test), "data.cifar_test", "list of CIFAR-10 binary batch paths required")
    need(d.subset is None or d.subset >= 1, "data.subset", "must be >= 1")
    need(n.kind in NOISE_KINDS, "noise.kind", f"must be one of {list(NOISE_KINDS)}")
    need(0.0 <= n.ratio <= 1.0, "noise.ratio", "must lie in [0, 1]")
    if n.asym_map is not None:
        n_classes = 10 if d.source == "cifar10" else d.n_classes
        try:
            validate_class_map(n.asym_map, n_classes)
        except ConfigError as exc:
            raise ConfigError(f"noise.asym_map: {exc}", field="noise.asym_map") from None
    need(m.arch in ("mlp", "cnn"), "model.arch", "must be 'mlp' or 'cnn'")
    need(m.arch == "mlp" or d.source == "cifar10", "model.arch", "cnn requires image data")
    need(len(m.hidden) >= 1 and all(isinstance(v, int) and v >= 1 for v in m.hidden),
         "model.hidden", "must be a non-empty list of positive integers")
    need(len(m.cnn_channels) == 2 and all(isinstance(v, int) and v >= 1 for v in m.cnn_channels),
         "model.cnn_channels", "must be two positive integers")
    need(m.cnn_hidden >= 1, "model.cnn_hidden", "must be >= 1")
    need(o.lr > 0, "optim.lr", "must be > 0")
    need(0 <= o.momentum < 1, "optim.momentum", "must lie in [0, 1)")
    need(o.weight_decay >= 0, "optim.weight_decay", "must be >= 0")
    need(o.lr_decay_epoch >= 0, "optim.lr_decay_epoch", "must be >= 0")
    need(o.lr_decay_factor > 0, "optim.lr_decay_factor", "must be > 0")
    need(t.method in ("dividemix", "ce"), "train.method", "must be 'dividemix' or 'ce'")
    need(t.epochs >= 1, "train.epochs", "must be >= 1")
    need(0 <= t.warmup_epochs < t.epochs, "train.warmup_epochs",
         f"must be >= 0 and < train.epochs ({t.epochs})")
    need(t.batch_size >= 1, "train.batch_size", "must be >= 1")
    need(len(t.seeds) == 2 and all(isinstance(s, int) and s >= 0 for s in t.seeds),
         "train.seeds", "must be two non-negative integers")
    need(t.seeds[0] != t.seeds[1], "train.seeds", "the two network seeds must differ")
    need(h.M >= 1, "hyper.M", "must be >= 1")
    need(h.T > 0, "hyper.T", "must be > 0")
    need(h.alpha > 0, "hyper.alpha", "must be > 0")
    need(h.lambda_u is None or h.lambda_u >= 0, "hyper.lambda_u", "must be >= 0")
    need(h.lambda_r >= 0, "hyper.lambda_r", "must be >= 0")
    need(h.tau is None or 0 < h.tau < 1, "hyper.tau", "must lie in (0, 1)")
    need(h.penalty_weight >= 0, "hyper.penalty_weight", "must be >= 0")
    need(h.aug_sigma >= 0, "hyper.aug_sigma", "must be >= 0")
    need(h.rampup_epochs >= 0, "hyper.rampup_epochs", "must be >= 0")
    return cfg


def _key_lines(node, prefix="", out=None):
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            full = f"{prefix}.{key_node.value}" if prefix else str(key_node.value)
            out[full] = key_node.start_mark.line + 1
            _key_lines(value_node, full, out)
    return out


def loads(text, source="<config>"):
    """Parse and validate YAML text.  Errors carry the line of the offending key."""
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}:{line or '?'}: YAML syntax error: {exc}", line=line) from None
    lines = _key_lines(root) if root is not None else {}
    try:
        return from_dict(data)
    except ConfigError as exc:
        name = exc.field or ""
        line = None
        while name:
            if name in lines:
                line = lines[name]
                break
            name = name.rpartition(".")[0]
        raise ConfigError(f"{source}:{line or 1}: {exc}", field=exc.field, line=line or 1) from None


def load(path):
    with open(path) as f:
        return loads(f.read(), source=str(path))


def dumps(cfg):
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)


def save(cfg, path):
    with open(path, "w") as f:
        f.write(dumps(cfg))
