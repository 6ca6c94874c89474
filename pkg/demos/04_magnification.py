"""Adversarial magnification: make an invisible perturbation visible.

Local renormalization divides each pixel's deviation from its
edge-preserving local mean by a blend of local and global contrast.  Flat
regions get stretched enormously, so structure hiding at a few gray
levels of amplitude — exactly where adversarial perturbations live —
snaps into view, while the picture's own edges stay recognizable.
"""

import numpy as np

from _common import demo_dataset, demo_model, out_dir
from smoothadv import AttackConfig, BilateralConfig, magnify, make_attack, predict, sample_photo, save_image

out = out_dir("04-magnification")

# ---------------------------------------------------------------------------
# A faint smooth bump on a photo: invisible raw, obvious magnified.
# ---------------------------------------------------------------------------

photo = sample_photo(48, 72, seed=3)
yy, xx = np.mgrid[0 : photo.shape[0], 0 : photo.shape[1]]
bump = 0.015 * np.exp(-((yy - 20) ** 2 + (xx - 30) ** 2) / 60.0)
tampered = np.clip(photo + bump[:, :, None], 0, 1)

save_image(photo, out / "photo.png")
save_image(tampered, out / "photo-tampered.png")
save_image(magnify(photo), out / "photo-magnified.png")
save_image(magnify(tampered), out / "photo-tampered-magnified.png")

raw = np.abs(tampered - photo).mean()
magnified = np.abs(magnify(tampered) - magnify(photo)).mean()
peak = np.abs(magnify(tampered) - magnify(photo)).max()
print(
    f"photo bump:  mean |change| raw {raw:.5f}, magnified {magnified:.5f} ({magnified / raw:.1f}x); "
    f"peak change {np.abs(tampered - photo).max():.3f} -> {peak:.3f}"
)

# ---------------------------------------------------------------------------
# The same tool pointed at an actual adversarial example.
# ---------------------------------------------------------------------------

dataset = demo_dataset()
model = demo_model(dataset)
_, _, test_x, test_y = dataset
index = next(i for i in range(len(test_x)) if predict(model, test_x[i]) == int(test_y[i]))
x, label = test_x[index], int(test_y[index])

result = make_attack(model, AttackConfig(kind="scw"))(x, label)
print(f"\nsmooth attack on digit #{index}: success={bool(result.success)}, distortion={result.distortion:.3f}")

# Digits are small, so use a tighter window than the photo default.
digit_cfg = BilateralConfig(sigma_domain=2.0, sigma_range=5 / 255)
save_image(x, out / "digit.png")
save_image(result.adversarial, out / "digit-adversarial.png")
save_image(magnify(x, digit_cfg), out / "digit-magnified.png")
save_image(magnify(result.adversarial, digit_cfg), out / "digit-adversarial-magnified.png")

raw = np.abs(result.adversarial - x).mean()
magnified = np.abs(magnify(result.adversarial, digit_cfg) - magnify(x, digit_cfg)).mean()
print(f"digit attack: mean |change| raw {raw:.5f}, magnified {magnified:.5f} ({magnified / raw:.1f}x)")
print(f"\nside-by-side images written to {out}")
