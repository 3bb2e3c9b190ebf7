"""Corrupt a clean blobs dataset three ways and look at what changed.

Run: python3 demos/01_noise_injection.py
"""
import numpy as np

from dividemix.data import gen_blobs, inject_noise

train = gen_blobs(500, 4, 16, 6.0, seed=0)
print(f"{len(train)} samples, {train.n_classes} classes, noise rate {train.noise_rate:.2f}")

for kind, ratio in [("sym-all", 0.5), ("sym-excl", 0.5), ("asym", 0.4)]:
    noisy = inject_noise(train, kind, ratio, seed=1)
    # confusion between true and observed labels
    conf = np.zeros((4, 4), dtype=int)
    np.add.at(conf, (noisy.true_labels, noisy.labels), 1)
    print(f"\n{kind} at {ratio:.0%}: {noisy.noise_rate:.3f} of labels are wrong")
    print("rows = true class, columns = observed label")
    print(conf)

# features never change, only labels do
assert np.array_equal(noisy.x, train.x)
