"""Image-guided pixel graph and its regularized Laplacian.

Every pixel is a vertex carrying its color as a feature vector.  Edges
connect grid neighbors (4- or 8-connected) and are weighted by a feature
kernel on the color difference, so the graph encodes where the guide image
is flat and where it has edges.  The regularized Laplacian built from the
symmetrically normalized adjacency is the positive-definite operator whose
inverse does the smoothing.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateGraphError
from .image import as_features

KERNELS = ("laplacian", "gaussian")

# grid offsets covering each undirected neighbor pair once
_OFFSETS_4 = ((0, 1), (1, 0))
_OFFSETS_8 = _OFFSETS_4 + ((1, 1), (1, -1))


@dataclass(frozen=True)
class GraphConfig:
    """Neighborhood and feature-kernel settings for the pixel graph.

    The spatial kernel is the indicator of the chosen neighborhood; the
    feature kernel is either exp(-dist/sigma_f) ("laplacian") or
    exp(-dist^2 / (2 sigma_f^2)) ("gaussian") on the Euclidean color
    distance between neighboring pixels.
    """

    neighborhood: int = 8
    kernel: str = "laplacian"
    sigma_f: float = 0.1

    def __post_init__(self):
        if self.neighborhood not in (4, 8):
            raise ValueError(f"neighborhood must be 4 or 8, got {self.neighborhood}")
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.sigma_f > 0:
            raise ValueError(f"sigma_f must be positive, got {self.sigma_f}")


@dataclass(frozen=True)
class RegularizedLaplacian:
    """(I - alpha * W_normalized) / (1 - alpha), with the graph degrees."""

    alpha: float
    matrix: sp.csr_array
    degrees: np.ndarray

    @property
    def dim(self):
        return self.matrix.shape[0]


def feature_kernel(dist, cfg):
    """Edge weight for a given feature distance; monotone decreasing."""
    dist = np.asarray(dist, dtype=np.float64)
    if cfg.kernel == "laplacian":
        return np.exp(-dist / cfg.sigma_f)
    return np.exp(-(dist**2) / (2.0 * cfg.sigma_f**2))


def build_adjacency(img, cfg=GraphConfig()):
    """Weighted adjacency of the pixel grid guided by img.

    w_ij = k_f(x_i, x_j) for grid neighbors i != j, zero elsewhere
    (including the diagonal).  Raises DegenerateGraphError for a 1x1
    image, which has no neighbors.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w, _ = img.shape
    n = h * w
    if n < 2:
        raise DegenerateGraphError("a 1x1 image has no pixel neighbors")

    feats = as_features(img)
    idx = np.arange(n).reshape(h, w)
    offsets = _OFFSETS_8 if cfg.neighborhood == 8 else _OFFSETS_4

    rows, cols, vals = [], [], []
    for dr, dc in offsets:
        r0, r1 = max(0, -dr), h - max(0, dr)
        c0, c1 = max(0, -dc), w - max(0, dc)
        if r0 >= r1 or c0 >= c1:
            continue
        src = idx[r0:r1, c0:c1].ravel()
        dst = idx[r0 + dr : r1 + dr, c0 + dc : c1 + dc].ravel()
        dist = np.linalg.norm(feats[src] - feats[dst], axis=1)
        wgt = feature_kernel(dist, cfg)
        rows.extend((src, dst))
        cols.extend((dst, src))
        vals.extend((wgt, wgt))

    if not rows:
        raise DegenerateGraphError("image grid produced no edges")
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    adj = sp.coo_array((vals, (rows, cols)), shape=(n, n)).tocsr()
    return adj


def degree_vector(adj):
    """Row sums of the adjacency; every entry must be strictly positive."""
    deg = np.asarray(adj.sum(axis=1)).ravel()
    if deg.size == 0 or deg.min() <= 0.0:
        raise DegenerateGraphError("graph has an isolated pixel (zero degree)")
    return deg


def normalized_adjacency(adj, degrees=None):
    """Symmetric normalization D^{-1/2} W D^{-1/2}."""
    if degrees is None:
        degrees = degree_vector(adj)
    inv_sqrt = 1.0 / np.sqrt(degrees)
    scale = sp.diags_array(inv_sqrt)
    return (scale @ adj @ scale).tocsr()


def regularized_laplacian(adj_norm, alpha, degrees=None):
    """L_alpha = (I - alpha * W_norm) / (1 - alpha), positive-definite."""
    if not 0.0 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [0, 1), got {alpha}")
    n = adj_norm.shape[0]
    if degrees is None:
        degrees = np.asarray(adj_norm.sum(axis=1)).ravel()
    eye = sp.eye_array(n, format="csr")
    mat = ((eye - alpha * adj_norm) / (1.0 - alpha)).tocsr()
    return RegularizedLaplacian(alpha=alpha, matrix=mat, degrees=np.asarray(degrees, dtype=np.float64))


def laplacian_for_image(img, alpha, cfg=GraphConfig()):
    """Build W, degrees, and L_alpha for a guide image in one call."""
    adj = build_adjacency(img, cfg)
    deg = degree_vector(adj)
    adj_norm = normalized_adjacency(adj, deg)
    lap = regularized_laplacian(adj_norm, alpha, degrees=deg)
    return adj, deg, lap


def smoothness_energy(adj, degrees, signal):
    """Quadratic smoothness term sum_ij w_ij ||rhat_i - rhat_j||^2.

    rhat = D^{-1/2} signal; the sum runs over all ordered pairs, i.e.
    each undirected edge contributes twice.  signal may be (n, d) or an
    image-shaped (H, W, C) array.
    """
    signal = np.asarray(signal, dtype=np.float64)
    if signal.ndim == 3:
        signal = signal.reshape(-1, signal.shape[2])
    elif signal.ndim == 1:
        signal = signal[:, None]
    rhat = signal / np.sqrt(degrees)[:, None]
    coo = adj.tocoo()
    diff = rhat[coo.row] - rhat[coo.col]
    return float(np.sum(coo.data * np.sum(diff * diff, axis=1)))
