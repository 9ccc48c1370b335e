# A tour of the synthetic multi-domain benchmark.
# Run with:  python demos/01_synthetic_domains.py   (writes domains.png)

import numpy as np

from dacseg.datagen import SceneSpec, build_cdssdg_split, generate_scene, load_sample

# one scene is a pure function of (spec, seed): a bright disc with a cup inside it
spec = SceneSpec(image_side=64)
img, mask = generate_scene(spec, seed=7)
img.shape, mask.shape            # (3, 64, 64) float32 and (2, 64, 64) uint8
mask[1].sum() <= mask[0].sum()   # the cup is nested in the disc
np.all(mask[1] <= mask[0])

# a split: three source domains, a fifth of domain A labeled, domain D held out
man = build_cdssdg_split(["A", "B", "C"], 80, "A", 0.2, "D", seed=0)
len(man.labeled), len(man.unlabeled), len(man.target)   # 16, 224, 80

# every domain carries its own colour cast, gain, contrast, blur and noise
for d, st in man.styles.items():
    print(d, np.round(st.channel_shift, 2), round(st.brightness_gain, 2), round(st.contrast_gain, 2))

# the same scene seed rendered through each domain style
rec = {d: next(r for r in man.records if r.domain == d) for d in "ABCD"}
tiles = [load_sample(man, rec[d])[0] for d in "ABCD"]
[t.mean(axis=(1, 2)).round(2) for t in tiles]  # per-channel means differ by domain

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

fig, ax = plt.subplots(1, 4, figsize=(8, 2.2))
for a, d, t in zip(ax, "ABCD", tiles):
    a.imshow(t.transpose(1, 2, 0))
    a.set_title(f"domain {d}")
    a.axis("off")
fig.savefig("domains.png", dpi=100, bbox_inches="tight")
