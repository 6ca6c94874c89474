"""Differentiable classifiers and the margin loss.

A small conv-net stack implemented directly on numpy arrays: im2col
convolutions, ReLU, one dense head.  Forward passes return caches so that
backward passes are pure functions of them; a trained model is therefore
immutable and safe to share across threads.

The margin loss [y_t - max_{i != t} y_i + m]_+ is what every attack in
this package descends: driving it to zero pushes the true-class logit
below the best rival by at least the margin.
"""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import TrainingError

WEIGHTS_MAGIC = b"SCNN"
WEIGHTS_VERSION = 1


def margin_loss(logits, label, margin):
    """Hinge [y_t - max_{i != t} y_i + m]_+ for an untargeted attack."""
    y = np.asarray(logits, dtype=np.float64)
    k = y.shape[0]
    if not 0 <= label < k:
        raise ValueError(f"label {label} out of range for {k} classes")
    if margin < 0:
        raise ValueError(f"margin must be nonnegative, got {margin}")
    rival = _best_rival(y, label)
    return float(max(y[label] - y[rival] + margin, 0.0))


def margin_loss_grad(logits, label, margin):
    """Subgradient of margin_loss w.r.t. the logits.

    Zero when the hinge is inactive; otherwise +1 at the true label and
    -1 at the best rival (lowest index on ties).
    """
    y = np.asarray(logits, dtype=np.float64)
    grad = np.zeros_like(y)
    if margin_loss(y, label, margin) > 0.0:
        grad[label] = 1.0
        grad[_best_rival(y, label)] = -1.0
    return grad


def _best_rival(y, label):
    masked = y.copy()
    masked[label] = -np.inf
    return int(np.argmax(masked))


def predict(classifier, x):
    """Argmax class of the logits, lowest index on ties."""
    return int(np.argmax(classifier.logits(x)))


def loss_input_gradient(classifier, x, label, margin):
    """Gradient of margin_loss(f(x), label, margin) w.r.t. the image x."""
    logits = classifier.logits(x)
    seed = margin_loss_grad(logits, label, margin)
    if not seed.any():
        return np.zeros(classifier.input_shape)
    return classifier.input_gradient(x, seed)


class LinearClassifier:
    """Logits = A @ flatten(x) + b; the minimal differentiable classifier."""

    def __init__(self, weights, bias=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        k, m = self.weights.shape
        self.bias = np.zeros(k) if bias is None else np.asarray(bias, dtype=np.float64)
        self.num_classes = k
        self.input_shape = (m,)  # placeholder; set_input_shape fixes it

    def set_input_shape(self, shape):
        if int(np.prod(shape)) != self.weights.shape[1]:
            raise ValueError("input shape does not match weight columns")
        self.input_shape = tuple(shape)
        return self

    def logits(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected input shape {self.input_shape}, got {x.shape}")
        return self.weights @ x.ravel() + self.bias

    def batch_logits(self, xs):
        xs = np.asarray(xs, dtype=np.float64)
        return xs.reshape(xs.shape[0], -1) @ self.weights.T + self.bias

    def input_gradient(self, x, dlogits):
        return (np.asarray(dlogits) @ self.weights).reshape(self.input_shape)

    def value_and_grad(self, x):
        """Logits plus a pullback mapping dlogits to the input gradient."""
        return self.logits(x), lambda dlogits: self.input_gradient(x, dlogits)


# ---------------------------------------------------------------------------
# conv-net layers
# ---------------------------------------------------------------------------


def _im2col(x, k, stride):
    """(N, H, W, C) -> (N, Ho, Wo, k*k*C) patch matrix (copies)."""
    n, h, w, c = x.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    s0, s1, s2, s3 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, ho, wo, k, k, c),
        strides=(s0, s1 * stride, s2 * stride, s1, s2, s3),
        writeable=False,
    )
    return np.ascontiguousarray(view).reshape(n, ho, wo, k * k * c)


def _col2im(dcols, padded_shape, k, stride):
    """Scatter-add the patch gradient back to the padded input."""
    n, h, w, c = padded_shape
    _, ho, wo, _ = dcols.shape
    dcols = dcols.reshape(n, ho, wo, k, k, c)
    dx = np.zeros(padded_shape)
    for i in range(k):
        for j in range(k):
            dx[:, i : i + ho * stride : stride, j : j + wo * stride : stride, :] += dcols[:, :, :, i, j, :]
    return dx


class Conv2D:
    def __init__(self, in_ch, out_ch, ksize, stride, pad, rng):
        scale = np.sqrt(2.0 / (ksize * ksize * in_ch))
        self.w = rng.normal(0.0, scale, size=(ksize * ksize * in_ch, out_ch))
        self.b = np.zeros(out_ch)
        self.ksize = ksize
        self.stride = stride
        self.pad = pad
        self.in_ch = in_ch
        self.out_ch = out_ch

    def forward(self, x):
        if self.pad:
            x = np.pad(x, ((0, 0), (self.pad, self.pad), (self.pad, self.pad), (0, 0)))
        cols = _im2col(x, self.ksize, self.stride)
        out = cols @ self.w + self.b
        return out, (cols, x.shape)

    def backward(self, dout, cache):
        cols, padded_shape = cache
        n, ho, wo, _ = dout.shape
        dflat = dout.reshape(-1, self.out_ch)
        dw = cols.reshape(-1, cols.shape[-1]).T @ dflat
        db = dflat.sum(axis=0)
        dcols = (dflat @ self.w.T).reshape(n, ho, wo, -1)
        dx = _col2im(dcols, padded_shape, self.ksize, self.stride)
        if self.pad:
            dx = dx[:, self.pad : -self.pad, self.pad : -self.pad, :]
        return dx, [dw, db]

    def params(self):
        return [self.w, self.b]

    def set_params(self, arrays):
        self.w, self.b = arrays


class ReLU:
    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dout, mask):
        return dout * mask, []

    def params(self):
        return []

    def set_params(self, arrays):
        pass


class Dense:
    def __init__(self, in_dim, out_dim, rng):
        scale = np.sqrt(2.0 / in_dim)
        self.w = rng.normal(0.0, scale, size=(in_dim, out_dim))
        self.b = np.zeros(out_dim)

    def forward(self, x):
        flat = x.reshape(x.shape[0], -1)
        return flat @ self.w + self.b, (flat, x.shape)

    def backward(self, dout, cache):
        flat, shape = cache
        dw = flat.T @ dout
        db = dout.sum(axis=0)
        dx = (dout @ self.w.T).reshape(shape)
        return dx, [dw, db]

    def params(self):
        return [self.w, self.b]

    def set_params(self, arrays):
        self.w, self.b = arrays


class ConvNet:
    """Conv stack + one dense head over (H, W, C) images in [0, 1].

    conv_specs is a tuple of (out_channels, ksize, stride, pad) per layer;
    a ReLU follows every convolution.
    """

    def __init__(self, input_shape, num_classes, conv_specs, seed=0):
        rng = np.random.default_rng(seed)
        self.input_shape = tuple(input_shape)
        self.num_classes = num_classes
        self.conv_specs = tuple(tuple(s) for s in conv_specs)
        self.seed = seed
        self.test_accuracy = None

        h, w, c = input_shape
        self.layers = []
        for out_ch, k, stride, pad in self.conv_specs:
            self.layers.append(Conv2D(c, out_ch, k, stride, pad, rng))
            self.layers.append(ReLU())
            h = (h + 2 * pad - k) // stride + 1
            w = (w + 2 * pad - k) // stride + 1
            if h < 1 or w < 1:
                raise ValueError(f"conv spec {self.conv_specs} collapses a {input_shape} input")
            c = out_ch
        self.feature_dim = h * w * c
        self.layers.append(Dense(self.feature_dim, num_classes, rng))

    def forward(self, x):
        caches = []
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out, caches

    def backward(self, dlogits, caches):
        grads = [None] * len(self.layers)
        dout = dlogits
        for i in range(len(self.layers) - 1, -1, -1):
            dout, g = self.layers[i].backward(dout, caches[i])
            grads[i] = g
        return dout, grads

    def batch_logits(self, xs):
        logits, _ = self.forward(xs)
        return logits

    def logits(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected input shape {self.input_shape}, got {x.shape}")
        return self.batch_logits(x[None])[0]

    def input_gradient(self, x, dlogits):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected input shape {self.input_shape}, got {x.shape}")
        _, caches = self.forward(x[None])
        dx, _ = self.backward(np.asarray(dlogits, dtype=np.float64)[None], caches)
        return dx[0]

    def value_and_grad(self, x):
        """Logits plus a pullback reusing this forward pass's caches."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected input shape {self.input_shape}, got {x.shape}")
        logits, caches = self.forward(x[None])

        def pullback(dlogits):
            dx, _ = self.backward(np.asarray(dlogits, dtype=np.float64)[None], caches)
            return dx[0]

        return logits[0], pullback

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def accuracy(self, xs, labels, batch_size=256):
        hits = 0
        for start in range(0, len(xs), batch_size):
            logits = self.batch_logits(xs[start : start + batch_size])
            hits += int(np.sum(np.argmax(logits, axis=1) == labels[start : start + batch_size]))
        return hits / len(xs)


def reference_cnn(input_shape=(28, 28, 1), num_classes=10, widths=(16, 32, 32), seed=0):
    """Three convolutions (kernels 8/6/5, strides 2/2/1) and a dense head."""
    specs = ((widths[0], 8, 2, 3), (widths[1], 6, 2, 0), (widths[2], 5, 1, 0))
    return ConvNet(input_shape, num_classes, specs, seed=seed)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 0.05
    momentum: float = 0.9
    seed: int = 0
    min_accuracy: float = 0.95
    widths: tuple = (16, 32, 32)
    log: bool = False


def train_reference_cnn(dataset, cfg=TrainConfig()):
    """Train the reference network with mini-batch SGD + momentum.

    dataset is (train_x, train_y, test_x, test_y).  Raises TrainingError
    with diagnostics if the final test accuracy is below cfg.min_accuracy.
    """
    train_x, train_y, test_x, test_y = dataset
    num_classes = int(train_y.max()) + 1
    model = reference_cnn(train_x.shape[1:], num_classes, cfg.widths, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)

    params = model.params()
    velocity = [np.zeros_like(p) for p in params]

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_x))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            xb, yb = train_x[sel], train_y[sel]
            logits, caches = model.forward(xb)

            shifted = logits - logits.max(axis=1, keepdims=True)
            expv = np.exp(shifted)
            probs = expv / expv.sum(axis=1, keepdims=True)
            epoch_loss -= float(np.sum(np.log(probs[np.arange(len(sel)), yb] + 1e-300)))
            dlogits = probs
            dlogits[np.arange(len(sel)), yb] -= 1.0
            dlogits /= len(sel)

            _, grads = model.backward(dlogits, caches)
            flat_grads = [g for layer_grads in grads for g in layer_grads]
            for p, v, g in zip(params, velocity, flat_grads):
                v *= cfg.momentum
                v -= cfg.lr * g
                p += v
        if cfg.log:
            print(f"epoch {epoch + 1}/{cfg.epochs}: train loss {epoch_loss / len(order):.4f}")

    acc = model.accuracy(test_x, test_y)
    model.test_accuracy = acc
    if acc < cfg.min_accuracy:
        raise TrainingError(
            f"test accuracy {acc:.4f} below required {cfg.min_accuracy:.2f} "
            f"(epochs={cfg.epochs}, lr={cfg.lr}, batch={cfg.batch_size}, seed={cfg.seed})"
        )
    return model


# ---------------------------------------------------------------------------
# weight serialization: magic, version, architecture header, f32 arrays
# ---------------------------------------------------------------------------


def save_weights(model, path):
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(struct.pack("<I", WEIGHTS_VERSION))
        h, w, c = model.input_shape
        fh.write(struct.pack("<IIII", h, w, c, model.num_classes))
        fh.write(struct.pack("<I", len(model.conv_specs)))
        for spec in model.conv_specs:
            fh.write(struct.pack("<IIII", *spec))
        arrays = model.params()
        fh.write(struct.pack("<I", len(arrays)))
        for arr in arrays:
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4").tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != WEIGHTS_MAGIC:
            raise OSError(f"{path} is not a weight file (magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != WEIGHTS_VERSION:
            raise OSError(f"unsupported weight file version {version}")
        h, w, c, k = struct.unpack("<IIII", fh.read(16))
        (n_specs,) = struct.unpack("<I", fh.read(4))
        specs = [struct.unpack("<IIII", fh.read(16)) for _ in range(n_specs)]
        (n_arrays,) = struct.unpack("<I", fh.read(4))
        arrays = []
        for _ in range(n_arrays):
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape))
            arr = np.frombuffer(fh.read(4 * count), dtype="<f4").astype(np.float64)
            arrays.append(arr.reshape(shape))

    model = ConvNet((h, w, c), k, specs, seed=0)
    pos = 0
    for layer in model.layers:
        take = len(layer.params())
        layer.set_params(arrays[pos : pos + take])
        pos += take
    if pos != len(arrays):
        raise OSError(f"{path} holds {len(arrays)} arrays, architecture needs {pos}")
    return model
