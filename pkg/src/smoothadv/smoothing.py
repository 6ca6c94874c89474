"""Laplacian smoothing guided by an image.

The operator solves L_alpha r = z per channel, where L_alpha is the
regularized Laplacian of the guide image's pixel graph, and then rescales
rows by 1 / s_alpha(1) so constants pass through unchanged.  Two solve
backends are provided: a precomputed dense inverse for small images and
conjugate gradients for everything else.  Because the operator is linear
and L_alpha is symmetric, its adjoint (needed when backpropagating through
the smoothing) is one extra solve against the row-rescaled input.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import NumericalError
from .graph import GraphConfig, RegularizedLaplacian, laplacian_for_image

DIRECT_LIMIT = 4096  # largest pixel count for the dense-inverse backend


def cg_solve(lap, b, max_iters=50, tol=1e-6):
    """Conjugate-gradient solve of L x = b with zero initial guess.

    b may be a vector (n,) or a matrix (n, d); each column is solved as an
    independent system.  Iterations stop once ||L x - b|| <= tol * ||b||
    or after max_iters, whichever comes first.  Returns (x, iterations)
    where iterations is the largest count over the columns.
    """
    mat = lap.matrix if isinstance(lap, RegularizedLaplacian) else lap
    b = np.asarray(b, dtype=np.float64)
    single = b.ndim == 1
    cols = b[:, None] if single else b

    out = np.zeros_like(cols)
    worst = 0
    for j in range(cols.shape[1]):
        out[:, j], used = _cg_column(mat, cols[:, j], max_iters, tol)
        worst = max(worst, used)
    return (out[:, 0] if single else out), worst


def _cg_column(mat, b, max_iters, tol):
    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros_like(b), 0
    x = np.zeros_like(b)
    r = b.copy()
    d = r.copy()
    rs = float(r @ r)
    threshold = (tol * b_norm) ** 2
    it = 0
    while it < max_iters and rs > threshold:
        ad = mat @ d
        denom = float(d @ ad)
        if not np.isfinite(denom) or denom <= 0.0:
            raise NumericalError("conjugate gradient broke down (matrix not positive-definite?)")
        step = rs / denom
        x += step * d
        r -= step * ad
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise NumericalError("conjugate gradient produced non-finite residual")
        d = r + (rs_new / rs) * d
        rs = rs_new
        it += 1
    return x, it


@dataclass
class SmoothingOperator:
    """Solve context for s_alpha and its row-normalized form.

    norm_diag is s_alpha(1_n); dividing by it makes the all-ones signal a
    fixed point, preserving the dynamic range of whatever is smoothed.
    """

    laplacian: RegularizedLaplacian
    mode: str  # "direct" or "cg"
    norm_diag: np.ndarray
    guide_shape: tuple
    adjacency: sp.csr_array
    inverse: np.ndarray | None = None
    cg_iters: int = 50
    cg_tol: float = 1e-6
    graph_config: GraphConfig = field(default_factory=GraphConfig)

    @property
    def dim(self):
        return self.laplacian.dim

    @property
    def alpha(self):
        return self.laplacian.alpha


def build_smoothing_operator(
    guide,
    alpha,
    cfg=GraphConfig(),
    mode="auto",
    direct_limit=DIRECT_LIMIT,
    cg_iters=50,
    cg_tol=1e-6,
):
    """Construct the smoothing operator guided by an image.

    mode "auto" picks the dense precomputed inverse when the pixel count
    is at most direct_limit and conjugate gradients otherwise.
    """
    guide = np.asarray(guide, dtype=np.float64)
    adj, _, lap = laplacian_for_image(guide, alpha, cfg)
    n = lap.dim
    if mode == "auto":
        mode = "direct" if n <= direct_limit else "cg"
    if mode not in ("direct", "cg"):
        raise ValueError(f"mode must be 'direct', 'cg', or 'auto', got {mode!r}")

    inverse = None
    if mode == "direct":
        inverse = np.linalg.inv(lap.matrix.toarray())
        norm_diag = inverse @ np.ones(n)
    else:
        norm_diag, _ = cg_solve(lap, np.ones(n), max_iters=cg_iters, tol=cg_tol)
    if norm_diag.min() <= 0.0:
        raise NumericalError("row normalizer s_alpha(1) has a non-positive entry")

    return SmoothingOperator(
        laplacian=lap,
        mode=mode,
        norm_diag=norm_diag,
        guide_shape=guide.shape,
        adjacency=adj,
        inverse=inverse,
        cg_iters=cg_iters,
        cg_tol=cg_tol,
        graph_config=cfg,
    )


def _as_columns(op, z):
    """View z as (n, d) columns; returns (columns, restore function)."""
    z = np.asarray(z, dtype=np.float64)
    shape = z.shape
    if z.ndim == 3:
        cols = z.reshape(-1, z.shape[2])
    elif z.ndim == 2:
        cols = z
    elif z.ndim == 1:
        cols = z[:, None]
    else:
        raise ValueError(f"signal must be 1-, 2-, or 3-dimensional, got shape {shape}")
    if cols.shape[0] != op.dim:
        raise ValueError(f"signal has {cols.shape[0]} pixel rows, operator expects {op.dim}")
    return cols, lambda out: out.reshape(shape)


def _solve(op, cols):
    if op.mode == "direct":
        return op.inverse @ cols
    out, _ = cg_solve(op.laplacian, cols, max_iters=op.cg_iters, tol=op.cg_tol)
    return out


def smooth(op, z):
    """s_alpha(z) = L_alpha^{-1} z, applied independently per channel."""
    cols, restore = _as_columns(op, z)
    return restore(_solve(op, cols))


def smooth_normalized(op, z):
    """Row-normalized smoothing: diag(s_alpha(1))^{-1} s_alpha(z)."""
    cols, restore = _as_columns(op, z)
    return restore(_solve(op, cols) / op.norm_diag[:, None])


def smooth_adjoint(op, g):
    """Transpose of the normalized-smoothing Jacobian applied to g.

    J = diag(s_alpha(1))^{-1} L_alpha^{-1} is constant, and L_alpha is
    symmetric, so J^T g = L_alpha^{-1} (g / s_alpha(1)).
    """
    cols, restore = _as_columns(op, g)
    return restore(_solve(op, cols / op.norm_diag[:, None]))
