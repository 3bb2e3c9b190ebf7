"""One semi-supervised step, spelled out.

Labels of the labeled set are blended with the network's own prediction
according to the clean probability, unlabeled samples get a guessed label
from both networks, and everything is mixed before computing the loss.

Run: python3 demos/03_mixmatch_step.py
"""
import numpy as np

from dividemix.mixmatch import (
    augment,
    co_guess,
    labeled_targets,
    mixmatch_transform,
    predict_augmented,
    semi_losses,
)
from dividemix.nn import build_network

rng = np.random.default_rng(0)
net, peer = build_network("mlp", (8, 32, 3), seed=1), build_network("mlp", (8, 32, 3), seed=2)

x_lab = rng.normal(size=(4, 8))
y_lab = np.eye(3)[[0, 1, 2, 0]]
w = np.array([0.95, 0.9, 0.6, 0.2])  # clean probabilities from the peer's loss mixture
x_unl = rng.normal(size=(4, 8))
M, T = 2, 0.5

x_views = [augment(x_lab, rng, "vector", 0.1) for _ in range(M)]
u_views = [augment(x_unl, rng, "vector", 0.1) for _ in range(M)]

p_avg = predict_augmented(net, x_views).mean(axis=0)
y_hat = labeled_targets(y_lab, p_avg, w, T)
print("refined and sharpened labels:\n", y_hat.round(3))

q = co_guess(predict_augmented(net, u_views), predict_augmented(peer, u_views), T)
print("co-guessed labels for the unlabeled samples:\n", q.round(3))

mixed = mixmatch_transform(np.concatenate(x_views), np.tile(y_hat, (M, 1)),
                           np.concatenate(u_views), np.tile(q, (M, 1)), 4.0, rng)
print("mixing coefficients (always >= 0.5):", mixed.lam.round(2))

parts, grads = semi_losses(net, mixed, lambda_u=6.25, lambda_r=1.0)
print(f"L_X {parts.lx:.4f}  L_U {parts.lu:.4f}  L_reg {parts.lreg:.4f}  total {parts.total:.4f}")
