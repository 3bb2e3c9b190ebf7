"""Warm up a network on noisy labels, then split the data with a loss mixture.

Noisy samples are harder to fit, so after a short warm-up their
cross-entropy is higher.  A two-component mixture on the normalized losses
turns that into a per-sample clean probability.

Run: python3 demos/02_loss_division.py
"""
import numpy as np

from dividemix.data import gen_blobs, inject_noise
from dividemix.gmm import co_divide, model_clean_probability
from dividemix.metrics import division_auc, histogram_counts
from dividemix.nn import SGD, build_network
from dividemix.trainer import warmup_epoch

train = inject_noise(gen_blobs(500, 4, 16, 6.0, seed=0), "sym-excl", 0.5, seed=1)
net = build_network("mlp", (16, 64, 64, 4), seed=2)
opt = SGD(net.params, lr=0.02)
rng = np.random.default_rng(3)
for epoch in range(5):
    loss = warmup_epoch(net, opt, train, rng, batch_size=64)
    print(f"warm-up epoch {epoch}: mean loss {loss:.3f}")

losses, fit, w = model_clean_probability(net, train)
print(f"\nmixture means {fit.means.round(3)}, weights {fit.weights.round(3)}, {fit.n_iter} EM iterations")
print(f"AUC of clean probability against the true noise mask: {division_auc(w, train.noise_mask):.3f}")

div = co_divide(w, tau=0.5)
mask = train.noise_mask
print(f"labeled set {len(div.labeled)} samples ({mask[div.labeled].mean():.1%} noisy), "
      f"unlabeled set {len(div.unlabeled)} ({mask[div.unlabeled].mean():.1%} noisy)")

# a coarse text histogram of the normalized losses
edges, clean, noisy = histogram_counts(losses.normalized, mask, bins=10)
for lo, c, n in zip(edges, clean, noisy):
    print(f"{lo:4.1f} clean {'#' * (c // 20):<50} noisy {'#' * (n // 20)}")
