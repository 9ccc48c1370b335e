# The three perturbations the co-training step uses: Fourier style swap,
# CutMix and patch rotation.

import numpy as np

from dacseg.augment import (cutmix, fourier_style_transfer, localization_target, rotate_random_patch,
                            sample_cutmix_mask)
from dacseg.datagen import build_cdssdg_split, load_sample

man = build_cdssdg_split(["A", "B", "C"], 8, "A", 0.5, "D", seed=0)
x_i = load_sample(man, man.unlabeled[0])[0]   # image from one domain
x_j = load_sample(man, man.unlabeled[-1])[0]  # image from another

# Fourier style: swap low-frequency amplitude, keep the phase (so the layout stays)
styled = fourier_style_transfer(x_i, x_j, lam=1.0)
x_i.mean(axis=(1, 2)), styled.mean(axis=(1, 2)), x_j.mean(axis=(1, 2))  # colour moves towards x_j
np.allclose(fourier_style_transfer(x_i, x_j, lam=0.0), x_i, atol=1e-5)  # lam 0 is the identity

# CutMix: the mask is 1 outside a square and 0 inside it
M = sample_cutmix_mask(64, 64, 0.2, 0.8, seed=3)
M.beta, M.side, M.origin
mixed = cutmix(x_i, x_j, M)
inside = M.mask[0] == 0
np.array_equal(mixed[:, inside], x_j[:, inside])  # x_j shows through the hole
localization_target(M, 64, 64)  # normalized (c_x, c_y, d): what the loc head regresses

# patch rotation: a square of side round(alpha * beta * 64) turned by r quarter turns
rotated, r, spec = rotate_random_patch(x_i, alpha=0.6, beta=0.5, seed=4)
r, spec.side, spec.degrees
(rotated != x_i).any(axis=0).sum()  # pixels changed, all inside the patch

# label balance of the rotation pretext task
draws = [rotate_random_patch(x_i, 0.6, 0.5, seed=s)[1] for s in range(2000)]
np.bincount(draws) / len(draws)  # close to 0.25 each
