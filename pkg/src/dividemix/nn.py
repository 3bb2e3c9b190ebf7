"""Small numpy classifiers with hand-derived gradients.

Two architectures are available: a ReLU multi-layer perceptron over feature
vectors and a compact two-conv/two-dense network for 32x32 images.  Both
expose the same tiny protocol used everywhere else in the package::

    z, cache = net.logits(x)          # forward, keeps what backward needs
    grads = net.backward(cache, dz)   # dz = dL/dlogits, returns list like net.params

Loss gradients are expressed with respect to the logits and then pushed
through ``backward``; this keeps the composite semi-supervised objective a
simple sum of per-term logit gradients.
"""
import hashlib
import struct

import numpy as np

from .errors import FormatError, InvalidInputError, NumericalError

LOSSES = ("ce", "mse", "ce-neg-entropy")
LOG_EPS = 1e-12

_MAGIC = b"DMX1"
_KIND_CODES = {"mlp": 0, "cnn": 1}


def _he_uniform(rng, fan_in, shape):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class MLP:
    """Fully connected ReLU network.

    ``sizes`` is ``(in_dim, hidden_1, ..., hidden_k, n_classes)``.  Parameters
    are stored as ``[W1, b1, W2, b2, ...]`` with ``W`` of shape ``(fan_in, fan_out)``.
    """

    kind = "mlp"

    def __init__(self, sizes, params=None, tag=1, rng=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or min(sizes) < 1:
            raise InvalidInputError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        self.tag = tag
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            params = []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                params.append(_he_uniform(rng, fan_in, (fan_in, fan_out)))
                params.append(np.zeros(fan_out))
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        expected = self._shapes()
        if [p.shape for p in self.params] != expected:
            raise InvalidInputError("parameter shapes do not match architecture")

    def _shapes(self):
        shapes = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        return shapes

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def n_classes(self):
        return self.sizes[-1]

    def descriptor(self):
        return list(self.sizes)

    def logits(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidInputError(f"expected inputs of shape (n, {self.in_dim}), got {x.shape}")
        acts = [x]
        h = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
                acts.append(h)
        return h, acts

    def backward(self, cache, dz):
        acts = cache
        grads = [None] * len(self.params)
        delta = dz
        for i in reversed(range(len(self.params) // 2)):
            a = acts[i]
            grads[2 * i] = a.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.params[2 * i].T) * (a > 0)
        return grads

    def copy(self):
        return MLP(self.sizes, [p.copy() for p in self.params], tag=self.tag)


def _windows3x3(x):
    # (n, c, h, w) -> (n*h*w, c*9) patches for a 3x3 stride-1 pad-1 convolution
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)


def _conv_backward_input(dout, weight, shape):
    n, c, h, w = shape
    dxp = np.zeros((n, c, h + 2, w + 2))
    for i in range(3):
        for j in range(3):
            dxp[:, :, i:i + h, j:j + w] += np.einsum("nohw,oc->nchw", dout, weight[:, :, i, j])
    return dxp[:, :, 1:-1, 1:-1]


class SmallCNN:
    """Two 3x3 conv layers (each ReLU + 2x2 max-pool) followed by two dense layers.

    ``sizes`` is ``(in_channels, height, width, conv1, conv2, hidden, n_classes)``;
    height and width must be divisible by 4.  Inputs are flattened
    channel-first images.
    """

    kind = "cnn"

    def __init__(self, sizes, params=None, tag=1, rng=None):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) != 7 or min(sizes) < 1 or sizes[1] % 4 or sizes[2] % 4:
            raise InvalidInputError(f"invalid CNN descriptor {sizes}")
        self.sizes = sizes
        self.tag = tag
        if params is None:
            rng = np.random.default_rng() if rng is None else rng
            shapes = self._shapes()
            params = []
            for shape in shapes:
                if len(shape) == 1:
                    params.append(np.zeros(shape))
                else:
                    fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
                    params.append(_he_uniform(rng, fan_in, shape))
        self.params = [np.asarray(p, dtype=np.float64) for p in params]
        if [p.shape for p in self.params] != self._shapes():
            raise InvalidInputError("parameter shapes do not match architecture")

    def _shapes(self):
        cin, h, w, c1, c2, hidden, n_classes = self.sizes
        flat = c2 * (h // 4) * (w // 4)
        return [(c1, cin, 3, 3), (c1,), (c2, c1, 3, 3), (c2,),
                (flat, hidden), (hidden,), (hidden, n_classes), (n_classes,)]

    @property
    def in_dim(self):
        return self.sizes[0] * self.sizes[1] * self.sizes[2]

    @property
    def n_classes(self):
        return self.sizes[-1]

    def descriptor(self):
        return list(self.sizes)

    @staticmethod
    def _conv_relu_pool(x, weight, bias):
        n, _, h, w = x.shape
        cols = _windows3x3(x)
        out = cols @ weight.reshape(weight.shape[0], -1).T + bias
        out = out.reshape(n, h, w, -1).transpose(0, 3, 1, 2)
        act = np.maximum(out, 0.0)
        blocks = act.reshape(n, act.shape[1], h // 2, 2, w // 2, 2)
        pooled = blocks.max(axis=(3, 5))
        return pooled, (x, cols, act, blocks, pooled)

    @staticmethod
    def _conv_relu_pool_backward(dpooled, weight, saved):
        x, cols, act, blocks, pooled = saved
        n, o, h, w = act.shape
        mask = blocks == pooled[:, :, :, None, :, None]
        dact = (mask * dpooled[:, :, :, None, :, None]).reshape(n, o, h, w)
        dout = dact * (act > 0)
        dflat = dout.transpose(0, 2, 3, 1).reshape(n * h * w, o)
        dweight = (dflat.T @ cols).reshape(weight.shape)
        dbias = dflat.sum(axis=0)
        dx = _conv_backward_input(dout, weight, x.shape)
        return dx, dweight, dbias

    def logits(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise InvalidInputError(f"expected inputs of shape (n, {self.in_dim}), got {x.shape}")
        cin, h, w = self.sizes[:3]
        img = x.reshape(-1, cin, h, w)
        w1, b1, w2, b2, w3, b3, w4, b4 = self.params
        p1, s1 = self._conv_relu_pool(img, w1, b1)
        p2, s2 = self._conv_relu_pool(p1, w2, b2)
        flat = p2.reshape(len(x), -1)
        hid = np.maximum(flat @ w3 + b3, 0.0)
        z = hid @ w4 + b4
        return z, (s1, s2, flat, hid, p2.shape)

    def backward(self, cache, dz):
        s1, s2, flat, hid, p2_shape = cache
        w1, b1, w2, b2, w3, b3, w4, b4 = self.params
        g4 = hid.T @ dz
        gb4 = dz.sum(axis=0)
        dhid = (dz @ w4.T) * (hid > 0)
        g3 = flat.T @ dhid
        gb3 = dhid.sum(axis=0)
        dp2 = (dhid @ w3.T).reshape(p2_shape)
        dp1, g2, gb2 = self._conv_relu_pool_backward(dp2, w2, s2)
        _, g1, gb1 = self._conv_relu_pool_backward(dp1, w1, s1)
        return [g1, gb1, g2, gb2, g3, gb3, g4, gb4]

    def copy(self):
        return SmallCNN(self.sizes, [p.copy() for p in self.params], tag=self.tag)


ARCHITECTURES = {"mlp": MLP, "cnn": SmallCNN}


def build_network(kind, sizes, seed=None, tag=1):
    """Create a freshly initialized network of the named architecture."""
    if kind not in ARCHITECTURES:
        raise InvalidInputError(f"unknown architecture {kind!r}")
    rng = np.random.default_rng(seed)
    return ARCHITECTURES[kind](sizes, tag=tag, rng=rng)


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax_backward(p, dp):
    """Pull a gradient w.r.t. softmax outputs back to the logits."""
    return p * (dp - (dp * p).sum(axis=1, keepdims=True))


def _forward(net, x):
    z, cache = net.logits(x)
    if not np.all(np.isfinite(z)):
        raise NumericalError("non-finite logits in forward pass")
    return z, cache


def forward_probs(net, x):
    """Softmax class probabilities, one row per input."""
    z, _ = _forward(net, x)
    return softmax(z)


def _validate_targets(targets, n, n_classes):
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != (n, n_classes):
        raise InvalidInputError(f"targets must have shape ({n}, {n_classes}), got {t.shape}")
    if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-6):
        raise InvalidInputError("target rows must be probability vectors")
    return t


def cross_entropy_terms(z, targets):
    """Mean soft-label cross-entropy and its logit gradient."""
    logp = log_softmax(z)
    n = len(z)
    loss = -(targets * logp).sum() / n
    return loss, (np.exp(logp) - targets) / n


def mse_terms(z, targets):
    """Mean squared L2 distance between softmax output and targets."""
    p = softmax(z)
    n = len(z)
    diff = p - targets
    loss = (diff ** 2).sum() / n
    return loss, softmax_backward(p, 2.0 * diff / n)


def entropy_terms(z):
    """Batch-mean prediction entropy H and its logit gradient."""
    logp = log_softmax(z)
    p = np.exp(logp)
    n = len(z)
    plogp = p * logp
    h = -plogp.sum() / n
    dh_dz = -p * (logp - plogp.sum(axis=1, keepdims=True)) / n
    return h, dh_dz


def prior_kl_terms(z, n_classes):
    """KL(uniform || batch-mean prediction) and its logit gradient."""
    p = softmax(z)
    n = len(z)
    prior = np.full(n_classes, 1.0 / n_classes)
    mean_p = np.maximum(p.mean(axis=0), LOG_EPS)
    loss = float(np.sum(prior * np.log(prior / mean_p)))
    dp = np.broadcast_to(-prior / mean_p / n, p.shape)
    return loss, softmax_backward(p, dp)


def loss_and_grads(net, x, targets, loss="ce", entropy_weight=1.0):
    """Scalar batch loss and parameter gradients.

    ``loss`` is one of ``"ce"``, ``"mse"`` or ``"ce-neg-entropy"``; the last
    one is cross-entropy minus ``entropy_weight`` times the mean prediction
    entropy (a confidence penalty).
    """
    if loss not in LOSSES:
        raise InvalidInputError(f"unknown loss {loss!r}; expected one of {LOSSES}")
    z, cache = _forward(net, x)
    t = _validate_targets(targets, len(z), net.n_classes)
    if loss == "mse":
        value, dz = mse_terms(z, t)
    else:
        value, dz = cross_entropy_terms(z, t)
        if loss == "ce-neg-entropy":
            h, dh = entropy_terms(z)
            value = value - entropy_weight * h
            dz = dz - entropy_weight * dh
    grads = net.backward(cache, dz)
    if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError("non-finite loss or gradient")
    return float(value), grads


class SGD:
    """SGD with heavy-ball momentum and coupled weight decay.

    Per parameter: ``v <- momentum * v + g + weight_decay * theta`` then
    ``theta <- theta - lr * v``.  Decay applies to biases too.
    """

    def __init__(self, params, lr, momentum=0.9, weight_decay=5e-4):
        if lr < 0:
            raise InvalidInputError("learning rate must be non-negative")
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buffers = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        if len(grads) != len(params):
            raise InvalidInputError("gradient list does not match parameters")
        for p, g, v in zip(params, grads, self.buffers):
            if g.shape != p.shape:
                raise InvalidInputError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            v *= self.momentum
            v += g + self.weight_decay * p
            p -= self.lr * v
        return params


def param_digest(net):
    """SHA-256 over the raw parameter bytes, for change detection."""
    h = hashlib.sha256()
    for p in net.params:
        h.update(np.ascontiguousarray(p).tobytes())
    return h.hexdigest()


def flat_params(net):
    return np.concatenate([p.ravel() for p in net.params])


def save_checkpoint(net, path):
    """Write parameters as ``DMX1`` little-endian binary.

    Layout: magic, u32 architecture code, u32 network tag, u32 descriptor
    length, u32 descriptor entries, then every parameter array as float32 in
    declaration order.
    """
    desc = net.descriptor()
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<III", _KIND_CODES[net.kind], int(net.tag), len(desc)))
        f.write(struct.pack(f"<{len(desc)}I", *desc))
        for p in net.params:
            f.write(np.ascontiguousarray(p, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _MAGIC:
        raise FormatError("not a DMX1 checkpoint")
    try:
        code, tag, ndesc = struct.unpack_from("<III", blob, 4)
        desc = struct.unpack_from(f"<{ndesc}I", blob, 16)
    except struct.error as exc:
        raise FormatError("truncated checkpoint header") from exc
    kinds = {v: k for k, v in _KIND_CODES.items()}
    if code not in kinds:
        raise FormatError(f"unknown architecture code {code}")
    cls = ARCHITECTURES[kinds[code]]
    shell = cls(desc, tag=tag, rng=np.random.default_rng(0))
    offset = 16 + 4 * ndesc
    params = []
    for shape in shell._shapes():
        count = int(np.prod(shape))
        if offset + 4 * count > len(blob):
            raise FormatError("truncated checkpoint payload")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        params.append(arr.reshape(shape).astype(np.float64))
        offset += 4 * count
    if offset != len(blob):
        raise FormatError("trailing bytes after checkpoint payload")
    return cls(desc, params, tag=tag)
