"""Training loops: warm-up, co-divide and the per-network semi-supervised epoch.

``run_experiment`` drives a whole run from a :class:`~dividemix.config.TrainConfig`.
The clean probabilities fitted on network k's losses are only ever used to
divide data for the other network, unless the self-divide ablation is on.
"""
import json
import math
import os
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import config as config_mod
from .data import gen_blobs, inject_noise, load_cifar10_binary, one_hot
from .errors import ConfigError
from .gmm import co_divide, model_clean_probability, write_division_csv
from .metrics import division_auc, summarize, test_accuracy
from .mixmatch import (
    augment,
    co_guess,
    labeled_targets,
    mixmatch_transform,
    predict_augmented,
    semi_losses,
)
from .nn import SGD, build_network, loss_and_grads, param_digest, save_checkpoint


@dataclass
class TrainingHistory:
    records: list = field(default_factory=list)
    nets: list = field(default=None, repr=False)

    def append(self, record):
        if self.records and record["epoch"] != self.records[-1]["epoch"] + 1:
            raise ValueError("epoch records must be consecutive")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def series(self, key):
        return [r[key] for r in self.records]

    @property
    def accuracies(self):
        return self.series("acc")

    def summary(self):
        best, last = summarize(self.accuracies)
        return {"best": best, "last10": last, "final": self.accuracies[-1]}


# ---------------------------------------------------------------------------
# data and model construction


def build_datasets(cfg):
    """Noisy training split and clean test split for a config."""
    d = cfg.data
    if d.source == "blobs":
        train = gen_blobs(d.n_train_per_class, d.n_classes, d.dim, d.separation, d.seed)
        test = gen_blobs(d.n_test_per_class, d.n_classes, d.dim, d.separation, d.seed + 10_007,
                         split="test")
    else:
        train = _concat([load_cifar10_binary(p) for p in d.cifar_train])
        test = _concat([load_cifar10_binary(p, split="test") for p in d.cifar_test])
        if d.subset:
            train = train.subset(np.arange(min(d.subset, len(train))))
    train = inject_noise(train, cfg.noise.kind, cfg.noise.ratio, cfg.noise.seed, cfg.noise.asym_map)
    return train, test


def _concat(parts):
    first = parts[0]
    return replace(first, x=np.concatenate([p.x for p in parts]),
                   labels=np.concatenate([p.labels for p in parts]),
                   true_labels=np.concatenate([p.true_labels for p in parts]))


def network_sizes(cfg, in_dim, n_classes):
    if cfg.model.arch == "mlp":
        return "mlp", [in_dim, *cfg.model.hidden, n_classes]
    c1, c2 = cfg.model.cnn_channels
    return "cnn", [3, 32, 32, c1, c2, cfg.model.cnn_hidden, n_classes]


def make_networks(cfg, in_dim, n_classes):
    """Two independently initialized networks and their private RNG streams."""
    kind, sizes = network_sizes(cfg, in_dim, n_classes)
    nets, rngs = [], []
    for tag, seed in enumerate(cfg.train.seeds, start=1):
        init_seq, train_seq = np.random.SeedSequence(seed).spawn(2)
        nets.append(build_network(kind, sizes, seed=init_seq, tag=tag))
        rngs.append(np.random.default_rng(train_seq))
    return nets, rngs


# ---------------------------------------------------------------------------
# warm-up


def warmup_epoch(net, opt, ds, rng, batch_size, penalty=False, penalty_weight=1.0):
    """One epoch of cross-entropy on all (noisy) labels; returns the mean batch loss."""
    loss_name = "ce-neg-entropy" if penalty else "ce"
    y = ds.onehot
    order = rng.permutation(len(ds))
    losses = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        loss, grads = loss_and_grads(net, ds.x[idx], y[idx], loss_name, penalty_weight)
        opt.step(net.params, grads)
        losses.append(loss)
    return float(np.mean(losses)) if losses else 0.0


def warmup(nets, opts, ds, epochs, rngs, batch_size, penalty=False, penalty_weight=1.0):
    """Independently warm up each network for ``epochs`` epochs."""
    for _ in range(epochs):
        for net, opt, rng in zip(nets, opts, rngs):
            warmup_epoch(net, opt, ds, rng, batch_size, penalty, penalty_weight)
    return nets


# ---------------------------------------------------------------------------
# semi-supervised epoch


class _Cycler:
    """Endless reshuffled stream over an index array."""

    def __init__(self, indices, rng):
        self.indices = np.asarray(indices)
        self.rng = rng
        self.order = np.empty(0, dtype=np.int64)
        self.pos = 0

    def take(self, n):
        out = []
        while n > 0 and len(self.indices):
            if self.pos >= len(self.order):
                self.order = self.indices[self.rng.permutation(len(self.indices))]
                self.pos = 0
            chunk = self.order[self.pos:self.pos + n]
            self.pos += len(chunk)
            n -= len(chunk)
            out.append(chunk)
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def dividemix_epoch(net, opt, ds, division, hp, rng, guide=None, *, refine=True,
                    aug_kind="vector", aug_sigma=0.0, lambda_u_at=None, epoch_offset=0.0):
    """Train ``net`` for one epoch on a labeled/unlabeled division.

    ``guide`` is the peer network used for co-guessing; it is only read.  With
    ``guide=None`` the network guesses alone (self-training ablations).
    ``lambda_u_at(progress)`` gives the unsupervised weight at a fractional
    epoch index; by default the configured ``hp.lambda_u`` is used.
    Returns mean loss terms over the epoch.
    """
    peer = net if guide is None else guide
    y_all = ds.onehot
    b = hp.batch_size
    labeled = division.labeled
    n_iter = math.ceil(len(labeled) / b)
    perm = rng.permutation(len(labeled))
    unl = _Cycler(division.unlabeled, rng)
    sums = {"lx": 0.0, "lu": 0.0, "lreg": 0.0, "total": 0.0, "lambda_u": 0.0}

    for it in range(n_iter):
        pick = perm[it * b:(it + 1) * b]
        idx_x = labeled[pick]
        w_b = division.labeled_w[pick]
        idx_u = unl.take(len(idx_x))

        x_b, y_b = ds.x[idx_x], y_all[idx_x]
        x_views = [augment(x_b, rng, aug_kind, aug_sigma, ds.image_shape) for _ in range(hp.M)]
        u_views = [augment(ds.x[idx_u], rng, aug_kind, aug_sigma, ds.image_shape)
                   for _ in range(hp.M)] if len(idx_u) else []

        p_avg = predict_augmented(net, x_views).mean(axis=0)
        y_hat = labeled_targets(y_b, p_avg, w_b, hp.T, refine)
        if len(idx_u):
            preds_own = predict_augmented(net, u_views)
            preds_peer = preds_own if peer is net else predict_augmented(peer, u_views)
            q = co_guess(preds_own, preds_peer, hp.T)
            u_hat = np.concatenate(u_views)
            q_hat = np.tile(q, (hp.M, 1))
        else:
            u_hat = np.empty((0, ds.x.shape[1]))
            q_hat = np.empty((0, y_all.shape[1]))

        x_hat = np.concatenate(x_views)
        mixed = mixmatch_transform(x_hat, np.tile(y_hat, (hp.M, 1)), u_hat, q_hat, hp.alpha, rng)
        lam_u = hp.lambda_u if lambda_u_at is None else lambda_u_at(epoch_offset + it / n_iter)
        parts, grads = semi_losses(net, mixed, lam_u, hp.lambda_r)
        opt.step(net.params, grads)
        for key in ("lx", "lu", "lreg", "total"):
            sums[key] += getattr(parts, key)
        sums["lambda_u"] += lam_u

    return {k: (v / n_iter if n_iter else 0.0) for k, v in sums.items()} | {"iters": n_iter}


def linear_rampup(lambda_u, rampup_epochs):
    def at(progress):
        if rampup_epochs <= 0:
            return lambda_u
        return lambda_u * float(np.clip(progress / rampup_epochs, 0.0, 1.0))
    return at


# ---------------------------------------------------------------------------
# full run


def _learning_rate(cfg, epoch):
    o = cfg.optim
    return o.lr * (o.lr_decay_factor if epoch >= o.lr_decay_epoch else 1.0)


def _aug_settings(cfg, train):
    if cfg.ablation.no_augmentation:
        return "none", 0.0
    if train.image_shape is not None:
        return "image", 0.0
    return "vector", cfg.hyper.aug_sigma * train.x.std(axis=0)


def _round(v):
    return None if v is None else float(v)


def run_experiment(cfg, run_dir=None, datasets=None, progress=None):
    """Run warm-up then alternating semi-supervised epochs; return the history.

    With ``run_dir`` set, per-epoch JSON lines go to ``log.jsonl`` (no wall-clock
    fields, so identical configs give identical bytes), timing to
    ``timing.jsonl`` and, if enabled, per-network division dumps to
    ``divisions/``.
    """
    cfg = config_mod.resolve(config_mod.validate(cfg))
    hp = cfg.hyperparams()
    abl = cfg.ablation
    train, test = build_datasets(cfg) if datasets is None else datasets
    nets, rngs = make_networks(cfg, train.x.shape[1], train.n_classes)
    opts = [SGD(n.params, cfg.optim.lr, cfg.optim.momentum, cfg.optim.weight_decay) for n in nets]
    single = cfg.train.method == "ce" or abl.self_divide
    trained = [0] if single else [0, 1]
    aug_kind, aug_sigma = _aug_settings(cfg, train)
    ramp = linear_rampup(hp.lambda_u, hp.rampup_epochs)
    mask = train.noise_mask

    log_f = timing_f = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        config_mod.save(cfg, os.path.join(run_dir, "config.yaml"))
        log_f = open(os.path.join(run_dir, "log.jsonl"), "w")
        timing_f = open(os.path.join(run_dir, "timing.jsonl"), "w")
        if cfg.output.dump_divisions:
            os.makedirs(os.path.join(run_dir, "divisions"), exist_ok=True)

    history = TrainingHistory()
    clean_prob = {}
    try:
        for epoch in range(cfg.train.epochs):
            t0 = time.perf_counter()
            lr = _learning_rate(cfg, epoch)
            for opt in opts:
                opt.lr = lr
            stats = [None, None]
            sizes = [None, None]
            if cfg.train.method == "ce" or epoch < cfg.train.warmup_epochs:
                phase = "ce" if cfg.train.method == "ce" else "warmup"
                penalty = hp.confidence_penalty and phase == "warmup"
                for k in trained:
                    loss = warmup_epoch(nets[k], opts[k], train, rngs[k], hp.batch_size,
                                        penalty, hp.penalty_weight)
                    stats[k] = {"ce": loss}
            else:
                phase = "dividemix"
                for k in trained:
                    source = k if abl.self_divide else 1 - k
                    w = clean_prob[source]
                    division = co_divide(w, hp.tau, min_labeled=hp.batch_size, source=source + 1)
                    if not abl.self_divide and division.source != 2 - k:
                        raise AssertionError("division for a network must come from its peer")
                    sizes[k] = (len(division.labeled), len(division.unlabeled))
                    guide = None if abl.self_divide else nets[1 - k]
                    before = param_digest(guide) if guide is not None else None
                    stats[k] = dividemix_epoch(
                        nets[k], opts[k], train, division, hp, rngs[k], guide,
                        refine=not abl.no_refinement, aug_kind=aug_kind, aug_sigma=aug_sigma,
                        lambda_u_at=ramp, epoch_offset=epoch - cfg.train.warmup_epochs)
                    if guide is not None and param_digest(guide) != before:
                        raise AssertionError("peer network changed during another network's epoch")

            # loss modeling at the end of the epoch feeds the next epoch's division
            aucs = [None, None]
            for k in trained:
                losses, fit, w = model_clean_probability(nets[k], train)
                clean_prob[k] = w
                aucs[k] = division_auc(w, mask)
                if log_f is not None and cfg.output.dump_divisions:
                    div = co_divide(w, hp.tau)
                    path = os.path.join(run_dir, "divisions", f"epoch_{epoch:03d}_net{k + 1}.csv")
                    write_division_csv(path, losses, w, div, mask)

            acc1 = test_accuracy(nets, test, "net1")
            acc2 = None if single else test_accuracy(nets, test, "net2")
            acc_ens = None if single else test_accuracy(nets, test, "ensemble")
            reported = acc1 if (single or abl.single_model_test) else acc_ens
            record = {
                "run": cfg.run_name, "epoch": epoch, "phase": phase, "lr": lr,
                "acc": reported, "acc_ensemble": acc_ens, "acc_net1": acc1, "acc_net2": acc2,
                "auc_net1": aucs[0], "auc_net2": aucs[1],
            }
            for k in (0, 1):
                s = stats[k] or {}
                n_lab = sizes[k]
                record[f"labeled_frac_net{k + 1}"] = None if n_lab is None else n_lab[0] / len(train)
                record[f"n_labeled_net{k + 1}"] = None if n_lab is None else n_lab[0]
                record[f"n_unlabeled_net{k + 1}"] = None if n_lab is None else n_lab[1]
                for key in ("ce", "lx", "lu", "lreg", "total", "lambda_u"):
                    record[f"{key}_net{k + 1}"] = _round(s.get(key))
            history.append(record)
            if log_f is not None:
                log_f.write(json.dumps(record) + "\n")
                log_f.flush()
                timing_f.write(json.dumps({"run": cfg.run_name, "epoch": epoch,
                                           "timestamp": time.time(),
                                           "wall_clock": time.perf_counter() - t0}) + "\n")
            if progress is not None:
                progress(record)
    finally:
        if log_f is not None:
            log_f.close()
            timing_f.close()

    if run_dir is not None:
        with open(os.path.join(run_dir, "summary.json"), "w") as f:
            json.dump(history.summary(), f, indent=2)
            f.write("\n")
        if cfg.output.checkpoints:
            for k in trained:
                save_checkpoint(nets[k], os.path.join(run_dir, f"net{k + 1}.dmx"))
    history.nets = nets
    return history


def check_config(cfg):
    """Validate a config without running it (re-raises as :class:`ConfigError`)."""
    try:
        return config_mod.resolve(config_mod.validate(cfg))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
