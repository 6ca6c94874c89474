"""Datasets: synthetic digit glyphs, IDX files, and PNG directories.

The synthetic set renders 5x7 digit bitmaps onto 28x28 canvases with
randomized scale, placement, stroke intensity, blur, and pixel noise.  It
is deliberately easy — the point is a classifier accurate enough that
attack statistics measure the attack, not the model.
"""

import csv
import struct
from pathlib import Path

import numpy as np

from .image import load_image, save_image

_GLYPHS = {
    0: ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    1: ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    2: ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    3: ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    4: ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    5: ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    6: ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    7: ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    8: ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    9: ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}

_BLUR_KERNEL = np.array([1.0, 2.0, 1.0]) / 4.0


def _glyph_array(digit):
    rows = _GLYPHS[digit]
    return np.array([[c == "1" for c in row] for row in rows], dtype=np.float64)


def _render_digit(digit, rng, size=28):
    canvas = np.zeros((size, size))
    scale = int(rng.integers(2, 4))
    glyph = np.kron(_glyph_array(digit), np.ones((scale, scale)))
    gh, gw = glyph.shape
    top = (size - gh) // 2 + int(rng.integers(-3, 4))
    left = (size - gw) // 2 + int(rng.integers(-3, 4))
    top = min(max(top, 0), size - gh)
    left = min(max(left, 0), size - gw)
    intensity = rng.uniform(0.65, 1.0)
    canvas[top : top + gh, left : left + gw] = glyph * intensity

    if rng.random() < 0.5:
        canvas = _separable_blur(canvas)
    canvas += rng.normal(0.0, 0.04, size=canvas.shape)
    return np.clip(canvas, 0.0, 1.0)


def _separable_blur(img):
    out = np.apply_along_axis(lambda r: np.convolve(r, _BLUR_KERNEL, mode="same"), 1, img)
    return np.apply_along_axis(lambda c: np.convolve(c, _BLUR_KERNEL, mode="same"), 0, out)


def synthetic_digits(n_train=2000, n_test=500, seed=0, size=28):
    """Seeded 10-class digit dataset: (train_x, train_y, test_x, test_y).

    Images are (size, size, 1) float64 in [0, 1]; labels are int64.
    Classes are balanced up to remainder.
    """
    rng = np.random.default_rng(seed)

    def make(n):
        labels = np.arange(n) % 10
        rng.shuffle(labels)
        images = np.stack([_render_digit(int(d), rng, size) for d in labels])
        return images[..., None], labels.astype(np.int64)

    train_x, train_y = make(n_train)
    test_x, test_y = make(n_test)
    return train_x, train_y, test_x, test_y


# ---------------------------------------------------------------------------
# IDX files (big-endian magic + dims header, u8 payload)
# ---------------------------------------------------------------------------


def write_idx_images(path, images):
    """Write (N, H, W) or (N, H, W, 1) images in [0, 1] as u8 IDX."""
    arr = np.asarray(images)
    if arr.ndim == 4:
        if arr.shape[3] != 1:
            raise ValueError("IDX image files hold single-channel images")
        arr = arr[..., 0]
    payload = np.round(arr * 255.0).astype(np.uint8)
    n, h, w = payload.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 2051, n, h, w))
        fh.write(payload.tobytes())


def read_idx_images(path):
    with open(path, "rb") as fh:
        magic, n, h, w = struct.unpack(">IIII", fh.read(16))
        if magic != 2051:
            raise OSError(f"{path}: bad IDX image magic {magic}")
        data = np.frombuffer(fh.read(n * h * w), dtype=np.uint8)
    return data.reshape(n, h, w, 1).astype(np.float64) / 255.0


def write_idx_labels(path, labels):
    arr = np.asarray(labels).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 2049, len(arr)))
        fh.write(arr.tobytes())


def read_idx_labels(path):
    with open(path, "rb") as fh:
        magic, n = struct.unpack(">II", fh.read(8))
        if magic != 2049:
            raise OSError(f"{path}: bad IDX label magic {magic}")
        data = np.frombuffer(fh.read(n), dtype=np.uint8)
    return data.astype(np.int64)


def save_idx_dataset(directory, dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_x, train_y, test_x, test_y = dataset
    write_idx_images(directory / "train-images.idx", train_x)
    write_idx_labels(directory / "train-labels.idx", train_y)
    write_idx_images(directory / "test-images.idx", test_x)
    write_idx_labels(directory / "test-labels.idx", test_y)


def load_idx_dataset(directory):
    directory = Path(directory)
    return (
        read_idx_images(directory / "train-images.idx"),
        read_idx_labels(directory / "train-labels.idx"),
        read_idx_images(directory / "test-images.idx"),
        read_idx_labels(directory / "test-labels.idx"),
    )


# ---------------------------------------------------------------------------
# PNG directory with labels.csv (filename,label,split)
# ---------------------------------------------------------------------------


def save_png_dataset(directory, dataset):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    train_x, train_y, test_x, test_y = dataset
    with open(directory / "labels.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["filename", "label", "split"])
        for split, xs, ys in (("train", train_x, train_y), ("test", test_x, test_y)):
            for i, (img, label) in enumerate(zip(xs, ys)):
                name = f"{split}_{i:05d}.png"
                save_image(img, directory / name)
                writer.writerow([name, int(label), split])


def load_png_dataset(directory):
    directory = Path(directory)
    rows = {"train": [], "test": []}
    with open(directory / "labels.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            split = row["split"]
            if split not in rows:
                raise ValueError(f"labels.csv: unknown split {split!r}")
            rows[split].append((row["filename"], int(row["label"])))

    def load_split(items):
        if not items:
            return np.zeros((0,)), np.zeros((0,), dtype=np.int64)
        images = np.stack([load_image(directory / name) for name, _ in items])
        labels = np.array([label for _, label in items], dtype=np.int64)
        return images, labels

    train_x, train_y = load_split(rows["train"])
    test_x, test_y = load_split(rows["test"])
    return train_x, train_y, test_x, test_y


# ---------------------------------------------------------------------------
# procedural test photograph
# ---------------------------------------------------------------------------


def sample_photo(height=64, width=96, seed=0):
    """A smooth synthetic RGB scene: sky gradient, sun, horizon, texture.

    Useful wherever a natural-looking image is needed without shipping
    binary assets — smoothing demos, magnification demos, CLI tests.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = np.zeros((height, width, 3))

    # sky: vertical gradient, warmer near the horizon
    t = yy / (height - 1)
    img[..., 0] = 0.35 + 0.45 * t
    img[..., 1] = 0.55 + 0.25 * t
    img[..., 2] = 0.85 - 0.25 * t

    # sun disc with a soft edge
    cy, cx = height * 0.3, width * 0.7
    d = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    sun = np.clip(1.0 - d / (0.12 * width), 0.0, 1.0) ** 2
    img += sun[..., None] * np.array([0.6, 0.5, 0.2])

    # ground below a sloping horizon
    horizon = height * 0.62 + 4.0 * np.sin(2.0 * np.pi * xx / width)
    ground = yy > horizon
    img[ground] = np.array([0.25, 0.4, 0.15]) + 0.1 * ((yy[ground] / height)[:, None])

    # low-amplitude texture everywhere
    img += rng.normal(0.0, 0.012, size=img.shape)
    return np.clip(img, 0.0, 1.0)
