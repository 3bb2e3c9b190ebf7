"""Per-sample loss modeling with a two-component 1-D Gaussian mixture.

The mixture is fitted by EM on min-max normalized cross-entropy losses; the
posterior of the low-mean component is the probability that a label is clean.
"""
import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidInputError
from .nn import log_softmax

VAR_FLOOR = 1e-4


@dataclass(frozen=True)
class LossVector:
    raw: np.ndarray
    normalized: np.ndarray

    @property
    def constant(self):
        return len(self.raw) == 0 or np.ptp(self.raw) == 0


def normalize_losses(raw):
    raw = np.asarray(raw, dtype=np.float64)
    if len(raw) == 0:
        return LossVector(raw, raw.copy())
    span = raw.max() - raw.min()
    if span == 0:
        return LossVector(raw, np.zeros_like(raw))
    return LossVector(raw, (raw - raw.min()) / span)


def per_sample_losses(net, x, labels, batch_size=1024):
    """Cross-entropy of each sample against its (noisy) label, in eval mode."""
    x = np.asarray(x)
    labels = np.asarray(labels)
    out = np.empty(len(labels))
    for start in range(0, len(labels), batch_size):
        z, _ = net.logits(x[start:start + batch_size])
        lp = log_softmax(z)
        out[start:start + batch_size] = -lp[np.arange(len(z)), labels[start:start + batch_size]]
    return normalize_losses(np.maximum(out, 0.0))


@dataclass
class GmmFit:
    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    log_likelihood: list = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False

    # component 0 always has the smaller mean
    clean_component: int = 0


def _log_joint(x, means, variances, weights):
    # (n, 2) log pi_k + log N(x; mu_k, var_k)
    d = x[:, None] - means[None, :]
    return (np.log(weights) - 0.5 * np.log(2 * np.pi * variances)) - 0.5 * d * d / variances


def m_step(x, resp, means=None, variances=None, var_floor=VAR_FLOOR):
    """Weighted maximum-likelihood update from ``(n, 2)`` responsibilities.

    A component with no mass keeps its previous mean and variance.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    resp = np.asarray(resp, dtype=np.float64)
    nk = resp.sum(axis=0)
    live = nk > 1e-12
    safe_nk = np.where(live, nk, 1.0)
    prev_m = np.zeros(2) if means is None else means
    prev_v = np.full(2, var_floor) if variances is None else variances
    new_means = np.where(live, (resp * x[:, None]).sum(axis=0) / safe_nk, prev_m)
    d = x[:, None] - new_means[None, :]
    new_vars = np.where(live, (resp * d * d).sum(axis=0) / safe_nk, prev_v)
    weights = np.maximum(nk / len(x), 1e-300)
    return new_means, np.maximum(new_vars, var_floor), weights / weights.sum()


def fit_gmm_em(losses, max_iter=100, tol=1e-4, var_floor=VAR_FLOOR, init_quantiles=(0.1, 0.9)):
    """Fit a two-component Gaussian mixture to 1-D data by EM.

    Means start at the given quantiles, variances at the pooled variance and
    weights at one half.  Iteration stops once the mean log-likelihood moves
    by less than ``tol``.  Variances never drop below ``var_floor``.
    """
    x = np.asarray(losses, dtype=np.float64).ravel()
    if len(x) < 2:
        raise InvalidInputError("EM needs at least two points")
    means = np.quantile(x, init_quantiles).astype(np.float64)
    variances = np.full(2, max(x.var(), var_floor))
    weights = np.array([0.5, 0.5])

    lj = _log_joint(x, means, variances, weights)
    trace = [float(logsumexp(lj, axis=1).mean())]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
        means, variances, weights = m_step(x, resp, means, variances, var_floor)
        lj = _log_joint(x, means, variances, weights)
        trace.append(float(logsumexp(lj, axis=1).mean()))
        if abs(trace[-1] - trace[-2]) < tol:
            converged = True
            break
    order = np.argsort(means, kind="stable")
    return GmmFit(means[order], variances[order], weights[order], trace, it, converged)


def clean_posterior(fit, losses):
    """Posterior responsibility of the smaller-mean component for each loss."""
    x = np.asarray(losses, dtype=np.float64).ravel()
    lj = _log_joint(x, fit.means, fit.variances, fit.weights)
    c = fit.clean_component
    return np.exp(lj[:, c] - logsumexp(lj, axis=1))


def model_clean_probability(net, ds):
    """Losses, fitted mixture and clean probabilities of ``ds`` under ``net``.

    A constant loss vector carries no information; the fit is skipped and
    every sample is treated as clean.
    """
    losses = per_sample_losses(net, ds.x, ds.labels)
    if losses.constant or len(losses.raw) < 2:
        return losses, None, np.ones(len(losses.raw))
    fit = fit_gmm_em(losses.normalized)
    return losses, fit, clean_posterior(fit, losses.normalized)


@dataclass(frozen=True)
class DataDivision:
    labeled: np.ndarray
    labeled_w: np.ndarray
    unlabeled: np.ndarray
    tau: float
    fallback: bool = False
    # index (1 or 2) of the network whose losses produced this division
    source: int = 0


def co_divide(w, tau, min_labeled=0, source=0):
    """Split sample indices into labeled (``w >= tau``) and unlabeled sets.

    When fewer than ``min_labeled`` samples pass the threshold, the
    ``min_labeled`` samples with the highest clean probability become the
    labeled set instead and ``fallback`` is set.
    """
    if not 0.0 < tau < 1.0:
        raise InvalidInputError("threshold must lie in (0, 1)")
    w = np.asarray(w, dtype=np.float64)
    mask = w >= tau
    fallback = False
    if mask.sum() < min(min_labeled, len(w)):
        top = np.argsort(-w, kind="stable")[:min_labeled]
        mask = np.zeros(len(w), dtype=bool)
        mask[top] = True
        fallback = True
    labeled = np.flatnonzero(mask)
    return DataDivision(labeled, w[labeled], np.flatnonzero(~mask), tau, fallback, source)


def write_division_csv(path, losses, w, division, noise_mask):
    """Dump ``index,loss,normalized_loss,w,assigned_set,is_noise`` for every sample."""
    assigned = np.full(len(w), "unlabeled", dtype=object)
    assigned[division.labeled] = "labeled"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["index", "loss", "normalized_loss", "w", "assigned_set", "is_noise"])
        for i in range(len(w)):
            writer.writerow([i, repr(float(losses.raw[i])), repr(float(losses.normalized[i])),
                             repr(float(w[i])), assigned[i], int(noise_mask[i])])


def read_division_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return {
        "loss": np.array([float(r["loss"]) for r in rows]),
        "normalized_loss": np.array([float(r["normalized_loss"]) for r in rows]),
        "w": np.array([float(r["w"]) for r in rows]),
        "labeled": np.array([r["assigned_set"] == "labeled" for r in rows]),
        "is_noise": np.array([r["is_noise"] == "1" for r in rows]),
    }

