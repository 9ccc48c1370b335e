# Losses on hand-built inputs, then a short co-training run on the benchmark.
# The run takes a few minutes on one CPU core.

import math

import torch

from dacseg.datagen import build_cdssdg_split
from dacseg.evaluate import evaluate_domain
from dacseg.losses import LossWeights, cps_loss, dice_loss, rot_loss, total_loss
from dacseg.trainer import DataPool, model_from_checkpoint, preset, run_training

# dice: identical masks give 0, disjoint masks give (almost) 1
g = torch.zeros(1, 1, 8, 8)
g[..., :4, :] = 1
dice_loss(g, g).item(), dice_loss(1 - g, g, eps=1e-9).item()

# rotation cross-entropy of uninformative logits is ln 4
rot_loss(torch.zeros(4), 0).item(), math.log(4)

# cross pseudo supervision vanishes when each model already matches the other's labels
y = (torch.rand(1, 2, 8, 8) > 0.5).float()
V = torch.zeros(1, 1, 8, 8)
cps_loss(y, y, y, y, V, V).item()

# the weighted total
total, report = total_loss(dict(sup=0.3, cps=0.5, cfs=0.2, loc=0.1, rot=1.0), LossWeights(1.0, 0.05, 0.01))
float(total)  # 0.821

# a short run: desk preset cut to 6 epochs
man = build_cdssdg_split(["A", "B", "C"], 80, "A", 0.2, "D", seed=0)
cfg = preset("desk", seed=0, epochs=6)
pool = DataPool(man, cfg.crop_size, cfg.val_count, cfg.seed)
record, metrics = run_training(cfg, man, pool=pool)
for row in metrics:
    print(row["epoch"], round(row["sup"], 3), round(row["cps"], 3), round(row.get("val_dsc", float("nan")), 1))

net, _ = model_from_checkpoint(record)
res = evaluate_domain(net.sub1, net.sub2, pool.target, "D", cfg.sigma)
print("unseen domain D, DSC per class:", res.per_class_dsc.round(1))
