"""Test accuracy, run summaries and clean/noisy division AUC."""
import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError
from .nn import forward_probs


def predict(nets, x, mode="ensemble", batch_size=2048):
    """Predicted classes; ``mode`` is ``"ensemble"``, ``"net1"`` or ``"net2"``.

    The ensemble averages the two softmax outputs.  ``argmax`` breaks ties
    toward the lowest class index.
    """
    if mode == "ensemble":
        members = list(nets)
    elif mode in ("net1", "net2"):
        members = [nets[int(mode[-1]) - 1]]
    else:
        raise InvalidInputError(f"unknown evaluation mode {mode!r}")
    out = []
    for start in range(0, len(x), batch_size):
        chunk = x[start:start + batch_size]
        probs = sum(forward_probs(net, chunk) for net in members) / len(members)
        out.append(np.argmax(probs, axis=1))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def test_accuracy(nets, testset, mode="ensemble"):
    if len(testset) == 0:
        raise InvalidInputError("empty test set")
    return float(np.mean(predict(nets, testset.x, mode) == testset.true_labels))


def summarize(accuracies, last=10):
    """(best, mean of the final ``last`` values); shorter histories average everything."""
    acc = np.asarray(accuracies, dtype=np.float64)
    if len(acc) == 0:
        raise InvalidInputError("empty history")
    return float(acc.max()), float(acc[-last:].mean())


def division_auc(w, noise_mask):
    """AUC of clean probability ``w`` as a score for clean (unmasked) samples.

    Mann-Whitney rank statistic with mid-ranks for ties.  Returns ``None``
    when only one class is present.
    """
    w = np.asarray(w, dtype=np.float64)
    clean = ~np.asarray(noise_mask, dtype=bool)
    n_pos = int(clean.sum())
    n_neg = len(w) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(w)
    u = ranks[clean].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def histogram_counts(normalized_loss, noise_mask, bins=50):
    """Clean and noisy counts over ``bins`` equal-width bins on [0, 1]."""
    edges = np.linspace(0.0, 1.0, bins + 1)
    x = np.clip(np.asarray(normalized_loss, dtype=np.float64), 0.0, 1.0)
    mask = np.asarray(noise_mask, dtype=bool)
    clean, _ = np.histogram(x[~mask], bins=edges)
    noisy, _ = np.histogram(x[mask], bins=edges)
    return edges, clean, noisy


def histogram_entropy(counts):
    """Shannon entropy (nats) of a histogram's normalized counts."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total == 0:
        return 0.0
    p = c[c > 0] / total
    return float(-(p * np.log(p)).sum())


# keep pytest from collecting the metric when imported into test modules
test_accuracy.__test__ = False
