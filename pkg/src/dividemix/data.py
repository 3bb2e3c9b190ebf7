"""Datasets and label-noise injection.

A :class:`Dataset` keeps both the (possibly corrupted) training labels and
the true labels, so the noise mask is always the exact disagreement set.
"""
import csv
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, FormatError, InvalidInputError

CIFAR_MEAN = (0.4914, 0.4822, 0.4465)
CIFAR_STD = (0.2470, 0.2435, 0.2616)
CIFAR_RECORD = 1 + 3072

# truck->automobile, bird->airplane, deer->horse, cat<->dog
CIFAR10_ASYM_MAP = {9: 1, 2: 0, 4: 7, 3: 5, 5: 3}

NOISE_KINDS = ("sym-all", "sym-excl", "asym")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    labels: np.ndarray
    true_labels: np.ndarray
    n_classes: int
    split: str = "train"
    image_shape: tuple = None

    def __post_init__(self):
        if len(self.x) != len(self.labels) or len(self.labels) != len(self.true_labels):
            raise InvalidInputError("features and labels must have the same length")
        if self.split == "test" and np.any(self.labels != self.true_labels):
            raise InvalidInputError("test split must be noise-free")

    def __len__(self):
        return len(self.labels)

    @property
    def noise_mask(self):
        return self.labels != self.true_labels

    @property
    def noise_rate(self):
        return float(self.noise_mask.mean()) if len(self) else 0.0

    @property
    def onehot(self):
        return one_hot(self.labels, self.n_classes)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return replace(self, x=self.x[idx], labels=self.labels[idx],
                       true_labels=self.true_labels[idx])


def one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def blob_means(n_classes, dim, separation):
    """Class means at scaled one-hot corners, pairwise ``separation`` apart."""
    if n_classes < 2:
        raise ConfigError("need at least two classes", field="n_classes")
    if separation <= 0:
        raise ConfigError("separation must be positive", field="separation")
    if n_classes > dim:
        raise ConfigError(f"cannot place {n_classes} one-hot means in {dim} dimensions",
                          field="n_classes")
    return np.eye(n_classes, dim) * (separation / np.sqrt(2.0))


def gen_blobs(n_per_class, n_classes, dim, separation, seed, split="train"):
    """Isotropic unit-variance Gaussian blobs, one per class, rows shuffled."""
    means = blob_means(n_classes, dim, separation)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = means[labels] + rng.standard_normal((len(labels), dim))
    order = rng.permutation(len(labels))
    labels = labels[order]
    return Dataset(x[order], labels.copy(), labels, n_classes, split)


def load_cifar10_binary(path, split="train"):
    """Parse a CIFAR-10 binary batch (1 label byte + 3072 CHW pixel bytes per record).

    Pixels are scaled to [0, 1] then standardized per channel; the result is
    flattened channel-first, matching :class:`~dividemix.nn.SmallCNN`.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) % CIFAR_RECORD:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of {CIFAR_RECORD}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    labels = records[:, 0].astype(np.int64)
    if np.any(labels > 9):
        bad = int(np.argmax(labels > 9))
        raise FormatError(f"{path}: record {bad} has label byte {labels[bad]}")
    pixels = records[:, 1:].astype(np.float64).reshape(-1, 3, 1024) / 255.0
    pixels = (pixels - np.array(CIFAR_MEAN)[:, None]) / np.array(CIFAR_STD)[:, None]
    return Dataset(pixels.reshape(-1, 3072), labels.copy(), labels, 10, split, (3, 32, 32))


def _check_train(ds):
    if ds.split == "test":
        raise InvalidInputError("noise may only be injected into a training split")


def inject_symmetric(ds, ratio, variant="all", seed=None):
    """Relabel exactly ``floor(ratio * N)`` uniformly chosen samples.

    ``variant="all"`` draws the new label uniformly over all classes (so the
    true label can survive); ``"exclusive"`` draws over the other C-1 classes.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError("noise ratio must lie in [0, 1]")
    if variant not in ("all", "exclusive"):
        raise InvalidInputError(f"unknown symmetric variant {variant!r}")
    _check_train(ds)
    rng = np.random.default_rng(seed)
    n = len(ds)
    chosen = rng.permutation(n)[: int(np.floor(ratio * n))]
    labels = ds.labels.copy()
    if variant == "all":
        labels[chosen] = rng.integers(0, ds.n_classes, size=len(chosen))
    else:
        shift = rng.integers(1, ds.n_classes, size=len(chosen))
        labels[chosen] = (ds.true_labels[chosen] + shift) % ds.n_classes
    return replace(ds, labels=labels)


def pairwise_swap_map(n_classes):
    """Default class map for non-CIFAR data: 0<->1, 2<->3, ...; an odd last class is left alone."""
    mapping = {}
    for c in range(0, n_classes - 1, 2):
        mapping[c] = c + 1
        mapping[c + 1] = c
    return mapping


def default_asym_map(n_classes):
    return dict(CIFAR10_ASYM_MAP) if n_classes == 10 else pairwise_swap_map(n_classes)


def validate_class_map(mapping, n_classes):
    mapping = {int(k): int(v) for k, v in dict(mapping).items()}
    for src, dst in mapping.items():
        if src == dst:
            raise ConfigError(f"asymmetric map sends class {src} to itself", field="asym_map")
        if not (0 <= src < n_classes and 0 <= dst < n_classes):
            raise ConfigError(f"asymmetric map entry {src}->{dst} out of range", field="asym_map")
    if len(set(mapping.values())) != len(mapping):
        raise ConfigError("asymmetric map must be injective", field="asym_map")
    return mapping


def inject_asymmetric(ds, ratio, mapping=None, seed=None):
    """Flip ``floor(ratio * count_c)`` samples of every mapped class ``c`` to ``mapping[c]``.

    Selection is stratified per class and based on the true labels.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidInputError("noise ratio must lie in [0, 1]")
    _check_train(ds)
    mapping = validate_class_map(default_asym_map(ds.n_classes) if mapping is None else mapping,
                                 ds.n_classes)
    rng = np.random.default_rng(seed)
    labels = ds.labels.copy()
    for src in sorted(mapping):
        members = np.flatnonzero(ds.true_labels == src)
        k = int(np.floor(ratio * len(members)))
        labels[rng.permutation(members)[:k]] = mapping[src]
    return replace(ds, labels=labels)


def inject_noise(ds, kind, ratio, seed=None, mapping=None):
    """Dispatch on the noise kind names used in configs (``sym-all``, ``sym-excl``, ``asym``)."""
    if kind == "sym-all":
        return inject_symmetric(ds, ratio, "all", seed)
    if kind == "sym-excl":
        return inject_symmetric(ds, ratio, "exclusive", seed)
    if kind == "asym":
        return inject_asymmetric(ds, ratio, mapping, seed)
    raise ConfigError(f"unknown noise kind {kind!r}; expected one of {NOISE_KINDS}", field="kind")


def export_csv(ds, path):
    """Write ``feature_0..feature_{d-1},noisy_label,true_label,is_noise`` rows."""
    dim = ds.x.shape[1] if ds.x.ndim == 2 else 0
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"feature_{j}" for j in range(dim)] + ["noisy_label", "true_label", "is_noise"])
        for xi, y, t in zip(ds.x, ds.labels, ds.true_labels):
            writer.writerow([repr(float(v)) for v in xi] + [int(y), int(t), int(y != t)])


def read_csv(path, n_classes, split="train"):
    """Inverse of :func:`export_csv`."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    dim = sum(h.startswith("feature_") for h in header)
    if header[dim:] != ["noisy_label", "true_label", "is_noise"]:
        raise FormatError(f"{path}: unexpected header")
    arr = np.array(body, dtype=np.float64).reshape(len(body), dim + 3)
    return Dataset(arr[:, :dim], arr[:, dim].astype(np.int64), arr[:, dim + 1].astype(np.int64),
                   n_classes, split)
