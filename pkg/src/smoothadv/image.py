"""Image representation and I/O.

An image is a float64 array of shape (height, width, channels) with values
in [0, 1] and channels in {1, 3}.  The flattened "feature" view has one row
per pixel in row-major order, shape (n, d) with n = height * width; every
module in the package relies on this ordering.

Two rasters are supported: 8-bit PNG for interchange, and a raw float
container (magic ``SADV``) for lossless storage of perturbations whose
amplitude is below the PNG quantization step.
"""

import struct

import numpy as np
from PIL import Image as PILImage

RAW_MAGIC = b"SADV"


def validate_image(img, name="image"):
    """Check shape and value range; returns the array unchanged."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ValueError(f"{name} must have shape (H, W, C) with C in {{1, 3}}, got {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"{name} has empty spatial dimensions {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError(f"{name} contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return img


def as_features(img):
    """Flatten (H, W, C) to the (n, d) pixel-feature matrix, row-major."""
    img = np.asarray(img)
    h, w, c = img.shape
    return img.reshape(h * w, c)


def from_features(feats, height, width):
    """Inverse of as_features."""
    feats = np.asarray(feats)
    n, d = feats.shape
    if n != height * width:
        raise ValueError(f"feature rows {n} do not match {height}x{width}")
    return feats.reshape(height, width, d)


def load_image(path):
    """Load an 8-bit grayscale or RGB raster as a float64 image in [0, 1]."""
    with PILImage.open(path) as pil:
        if pil.mode == "L":
            arr = np.asarray(pil, dtype=np.float64)[:, :, None]
        elif pil.mode == "RGB":
            arr = np.asarray(pil, dtype=np.float64)
        else:
            raise OSError(f"unsupported image mode {pil.mode!r} in {path} (need L or RGB)")
    return arr / 255.0


def save_image(img, path):
    """Write an 8-bit PNG; values are quantized with round-half-to-even."""
    img = validate_image(img)
    data = np.round(img * 255.0).astype(np.uint8)
    if img.shape[2] == 1:
        pil = PILImage.fromarray(data[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(data, mode="RGB")
    pil.save(path, format="PNG")


def save_raw(arr, path):
    """Write a float array (H, W, C) to the lossless SADV container.

    Layout: magic "SADV", u32 height, u32 width, u32 channels, then
    height*width*channels little-endian float32 values.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3:
        raise ValueError(f"expected (H, W, C), got shape {arr.shape}")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(RAW_MAGIC)
        fh.write(struct.pack("<III", h, w, c))
        fh.write(arr.astype("<f4").tobytes())


def load_raw(path):
    """Read an SADV container back into a float64 array (H, W, C)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != RAW_MAGIC:
            raise OSError(f"{path} is not an SADV container (magic {magic!r})")
        h, w, c = struct.unpack("<III", fh.read(12))
        payload = fh.read(4 * h * w * c)
    if len(payload) != 4 * h * w * c:
        raise OSError(f"{path} is truncated")
    arr = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    return arr.reshape(h, w, c)


def l2_distortion(a, b):
    """Frobenius norm of a - b over all pixels and channels."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm((a - b).ravel()))
