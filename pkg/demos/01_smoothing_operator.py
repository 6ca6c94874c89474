"""Image-guided smoothing: turn white noise into something that looks like it
belongs to the photo.

Every image induces a weighted graph: pixels are nodes, neighbors are
connected, and each edge is weighted by how similar the two pixel colors
are.  Inverting a regularized graph Laplacian built from those weights
maps any signal to a smoothed version that varies gently where the photo
is flat but is still allowed to jump across the photo's own edges.  The
strength knob alpha runs from 0 (no smoothing at all) toward 1 (heavy
smoothing).
"""

import numpy as np

from _common import out_dir
from smoothadv import (
    GraphConfig,
    build_smoothing_operator,
    sample_photo,
    save_image,
    smooth_adjoint,
    smooth_normalized,
    smoothness_energy,
)

out = out_dir("01-smoothing-operator")
rng = np.random.default_rng(0)

photo = sample_photo(32, 48, seed=0)
noise = rng.uniform(size=photo.shape)
save_image(photo, out / "photo.png")
save_image(noise, out / "noise.png")

# ---------------------------------------------------------------------------
# Smooth the same noise at increasing strengths and watch its roughness
# (the graph smoothness energy) collapse.
# ---------------------------------------------------------------------------

print(f"{'alpha':>6} {'energy of smoothed noise':>26}")
for alpha in (0.0, 0.5, 0.9, 0.99):
    op = build_smoothing_operator(photo, alpha, GraphConfig())
    smoothed = smooth_normalized(op, noise)
    energy = smoothness_energy(op.adjacency, op.laplacian.degrees, smoothed)
    save_image(np.clip(smoothed, 0, 1), out / f"smoothed-alpha{alpha:g}.png")
    print(f"{alpha:>6g} {energy:>26.4f}")

# ---------------------------------------------------------------------------
# Two properties the attack machinery relies on.
# ---------------------------------------------------------------------------

op = build_smoothing_operator(photo, 0.95, GraphConfig())

# The operator is normalized so a constant signal passes through unchanged:
ones = np.ones(photo.shape)
gap = np.abs(smooth_normalized(op, ones) - 1.0).max()
print(f"\nconstant signal fixed point: max deviation {gap:.2e}")

# And its adjoint is exact, which is what makes gradient-based optimization
# through the operator trustworthy:
a, b = rng.normal(size=photo.shape), rng.normal(size=photo.shape)
lhs = float(np.sum(smooth_normalized(op, a) * b))
rhs = float(np.sum(a * smooth_adjoint(op, b)))
print(f"adjoint identity: <S a, b> = {lhs:.6f}, <a, S' b> = {rhs:.6f}")

print(f"\nimages written to {out}")
