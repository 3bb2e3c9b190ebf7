"""MixMatch with label co-refinement and co-guessing.

All functions are batched: label distributions are ``(n, C)`` arrays and
predictions over ``M`` augmentations are ``(M, n, C)`` arrays.  Randomness
is always drawn from an explicitly passed ``numpy.random.Generator``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .nn import (
    _forward,
    cross_entropy_terms,
    mse_terms,
    prior_kl_terms,
    softmax,
)


@dataclass(frozen=True)
class HyperParams:
    M: int = 2
    T: float = 0.5
    alpha: float = 4.0
    lambda_u: float = 25.0
    lambda_r: float = 1.0
    batch_size: int = 64
    tau: float = 0.5
    warmup_epochs: int = 5
    confidence_penalty: bool = False
    penalty_weight: float = 1.0
    aug_sigma: float = 0.1
    rampup_epochs: int = 16

    def __post_init__(self):
        checks = [
            (self.M >= 1, "M must be >= 1"),
            (self.T > 0, "T must be > 0"),
            (self.alpha > 0, "alpha must be > 0"),
            (self.lambda_u >= 0, "lambda_u must be >= 0"),
            (self.lambda_r >= 0, "lambda_r must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (0 < self.tau < 1, "tau must lie in (0, 1)"),
            (self.warmup_epochs >= 0, "warmup_epochs must be >= 0"),
            (self.aug_sigma >= 0, "aug_sigma must be >= 0"),
            (self.rampup_epochs >= 0, "rampup_epochs must be >= 0"),
        ]
        for ok, msg in checks:
            if not ok:
                raise InvalidInputError(msg)


@dataclass(frozen=True)
class MixedBatch:
    x: np.ndarray
    p: np.ndarray
    n_labeled: int
    lam: np.ndarray

    @property
    def x_labeled(self):
        return self.x[:self.n_labeled]

    @property
    def x_unlabeled(self):
        return self.x[self.n_labeled:]


@dataclass(frozen=True)
class LossBreakdown:
    lx: float
    lu: float
    lreg: float
    total: float
    lambda_u: float
    lambda_r: float


def hflip(images):
    """Mirror ``(n, C, H, W)`` images left-right."""
    return images[..., ::-1]


def augment(x, rng, kind="vector", sigma=0.0, image_shape=None):
    """One random augmentation of every row of ``x``.

    ``kind="vector"`` adds Gaussian jitter (``sigma`` may be a per-feature
    array); ``kind="image"`` does a reflect-pad-4 random crop and a 50%
    horizontal flip on flattened channel-first images.  ``kind="none"``
    returns a copy.
    """
    x = np.asarray(x, dtype=np.float64)
    if kind == "none":
        return x.copy()
    if kind == "vector":
        if np.all(np.asarray(sigma) == 0):
            return x.copy()
        return x + rng.standard_normal(x.shape) * sigma
    if kind == "image":
        c, h, w = image_shape
        imgs = x.reshape(-1, c, h, w)
        padded = np.pad(imgs, ((0, 0), (0, 0), (4, 4), (4, 4)), mode="reflect")
        out = np.empty_like(imgs)
        oy = rng.integers(0, 9, size=len(imgs))
        ox = rng.integers(0, 9, size=len(imgs))
        flip = rng.random(len(imgs)) < 0.5
        for i in range(len(imgs)):
            crop = padded[i, :, oy[i]:oy[i] + h, ox[i]:ox[i] + w]
            out[i] = crop[..., ::-1] if flip[i] else crop
        return out.reshape(len(imgs), -1)
    raise InvalidInputError(f"unknown augmentation kind {kind!r}")


def co_refine(y, p_avg, w):
    """Blend labels with averaged predictions: ``w * y + (1 - w) * p_avg``."""
    w = np.asarray(w, dtype=np.float64)
    if np.any(w < 0) or np.any(w > 1):
        raise InvalidInputError("clean probabilities must lie in [0, 1]")
    if w.ndim == 1:
        w = w[:, None]
    return w * y + (1.0 - w) * p_avg


def sharpen(p, T):
    """Temperature sharpening ``p**(1/T)`` renormalized per row."""
    if T <= 0:
        raise InvalidInputError("temperature must be positive")
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if np.any(p < 0) or np.any(p.sum(axis=1) <= 0):
        raise InvalidInputError("cannot sharpen a non-positive distribution")
    with np.errstate(divide="ignore"):
        logp = np.log(p) / T
    logp -= logp.max(axis=1, keepdims=True)
    out = np.exp(logp)
    return out / out.sum(axis=1, keepdims=True)


def labeled_targets(y, p_avg, w, T, refine=True):
    """Sharpened targets for labeled rows; without refinement the given labels are sharpened."""
    return sharpen(co_refine(y, p_avg, w) if refine else y, T)


def co_guess(preds_a, preds_b, T):
    """Average two networks' predictions over their M augmentations, then sharpen.

    ``preds_a`` and ``preds_b`` are ``(M, n, C)``; pass the same array twice
    to guess with a single network.
    """
    preds_a = np.asarray(preds_a)
    preds_b = np.asarray(preds_b)
    if preds_a.shape != preds_b.shape:
        raise InvalidInputError("both networks must score the same augmentations")
    q_bar = (preds_a.sum(axis=0) + preds_b.sum(axis=0)) / (2 * preds_a.shape[0])
    return sharpen(q_bar, T)


def mix_pair(x1, p1, x2, p2, alpha, rng, lam=None):
    """MixUp biased toward the first source.

    A coefficient ``lam ~ Beta(alpha, alpha)`` is drawn per row (unless
    given) and replaced by ``max(lam, 1 - lam)``.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    if lam is None:
        if alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        lam = rng.beta(alpha, alpha, size=len(x1)) if x1.ndim > 1 else rng.beta(alpha, alpha)
    lam = np.maximum(lam, 1.0 - np.asarray(lam, dtype=np.float64))
    lx = lam[..., None] if np.ndim(lam) else lam
    return lx * x1 + (1 - lx) * x2, lx * p1 + (1 - lx) * np.asarray(p2), lam


def mixmatch_transform(x_hat, y_hat, u_hat, q, alpha, rng, lam=None):
    """Mix every labeled and unlabeled row with a random partner from their union.

    Rows of the returned batch keep the input order: the first
    ``len(x_hat)`` rows derive from the labeled set.
    """
    n_x = len(x_hat)
    if len(u_hat):
        all_x = np.concatenate([x_hat, u_hat])
        all_p = np.concatenate([y_hat, q])
    else:
        all_x, all_p = np.asarray(x_hat, dtype=np.float64), np.asarray(y_hat, dtype=np.float64)
    perm = rng.permutation(len(all_x))
    if lam is None:
        lam = rng.beta(alpha, alpha, size=len(all_x))
    else:
        lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (len(all_x),))
    x_mix, p_mix, lam = mix_pair(all_x, all_p, all_x[perm], all_p[perm], alpha, rng, lam=lam)
    return MixedBatch(x_mix, p_mix, n_x, lam)


def semi_losses(net, mixed, lambda_u, lambda_r):
    """Total loss ``L_X + lambda_u * L_U + lambda_r * L_reg`` and its gradients.

    ``L_X`` is soft-target cross-entropy over the labeled-derived rows,
    ``L_U`` the mean squared error over the unlabeled-derived rows (zero if
    there are none) and ``L_reg`` the KL divergence from a uniform prior to
    the mean prediction over all rows.
    """
    if mixed.n_labeled == 0:
        raise InvalidInputError("mixed batch has no labeled rows")
    z, cache = _forward(net, mixed.x)
    n_x = mixed.n_labeled
    n_all = len(z)
    dz = np.zeros_like(z)

    lx, dzx = cross_entropy_terms(z[:n_x], mixed.p[:n_x])
    dz[:n_x] += dzx
    lu = 0.0
    if n_all > n_x:
        lu, dzu = mse_terms(z[n_x:], mixed.p[n_x:])
        dz[n_x:] += lambda_u * dzu
    lreg, dzr = prior_kl_terms(z, net.n_classes)
    dz += lambda_r * dzr

    total = lx + lambda_u * lu + lambda_r * lreg
    grads = net.backward(cache, dz)
    return LossBreakdown(float(lx), float(lu), float(lreg), float(total), lambda_u, lambda_r), grads


def negative_entropy(probs):
    """Batch-mean ``-H`` where ``H = -sum_c p_c log p_c``."""
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return float(plogp.sum(axis=1).mean())


def predict_augmented(net, views):
    """Softmax predictions of ``net`` for each of the M augmented views."""
    return np.stack([softmax(_forward(net, v)[0]) for v in views])
