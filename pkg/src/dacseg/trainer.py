"""Training loop for dual-supervised asymmetric co-training.

Randomness is derived, never carried: every stream is a pure function of the
run seed and a key (see `derive_seed`):

* ``("init", 1)`` / ``("init", 2)`` / ``("init", "heads")`` - parameter init
* ``("data", epoch)`` - labeled order and unlabeled pair draws for one epoch
* ``("augment", step)`` - style mixing, CutMix mask and rotated patch of one step
* ``("val",)`` - which source images are held out for validation

so resuming from a checkpoint reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import random
import zlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .augment import (StyleAugConfig, cutmix, fourier_style_transfer, localization_target,
                      rotate_random_patch, sample_cutmix_mask)
from .datagen import DatasetManifest, load_sample
from .errors import CheckpointVersionError, ConfigError, DataError, NumericError
from .evaluate import evaluate_domain
from .losses import (LossReport, LossWeights, cfs_loss, cps_loss, dice_loss, loc_loss,
                     mixed_pseudo_label, prediction_variance, rot_loss, total_loss)
from .model import VARIANT_HEADS, DACModel, ModelConfig

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
VARIANTS = tuple(VARIANT_HEADS)
CFS_VARIANTS = ("full", "cps+cfs", "symmetric_loc", "symmetric_rot")
LOSS_COLUMNS = ["step", "sup", "cps", "cfs", "loc", "rot", "total"]


@dataclass
class TrainConfig:
    crop_size: int = 64
    batch_size: int = 8
    epochs: int = 60
    learning_rate: float = 1e-4
    weight_decay: float = 0.01
    alpha: float = 0.6
    tau1: float = 0.2
    tau2: float = 0.8
    weights: LossWeights = field(default_factory=LossWeights)
    variant: str = "full"
    seed: int = 0
    # None: one pass over the unlabeled pool, one pair per step
    steps_per_epoch: int | None = None
    sigma: float = 0.5
    dice_eps: float = 1.0
    base_width: int = 8
    feat_channels: int = 32
    depth: int = 4
    feature_stride: int = 4
    style_lambda: tuple[float, float] = (0.0, 1.0)
    style_low_freq: float = 0.1
    val_count: int = 16
    divergence_threshold: float = 1e3
    # epochs over which unlabeled-loss weights ramp up as exp(-5 (1 - t)^2); 0 disables
    rampup_epochs: float = 0.0

    def __post_init__(self):
        if isinstance(self.weights, dict):
            self.weights = LossWeights(**self.weights)
        self.style_lambda = tuple(self.style_lambda)
        if min(self.crop_size, self.batch_size, self.epochs) < 1:
            raise ConfigError("crop_size, batch_size and epochs must be positive")
        if self.steps_per_epoch is not None and self.steps_per_epoch < 1:
            raise ConfigError("steps_per_epoch must be positive")
        if not 0 < self.tau1 < self.tau2 < 1:
            raise ConfigError(f"need 0 < tau1 < tau2 < 1, got {self.tau1}, {self.tau2}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if VARIANT_HEADS[self.variant]["rot"] and round(self.alpha * self.tau1 * self.crop_size) < 8:
            raise ConfigError(f"crop_size {self.crop_size} gives rotation patches under 8 px "
                              f"at alpha={self.alpha}, tau1={self.tau1}")
        if self.rampup_epochs < 0:
            raise ConfigError("rampup_epochs must be >= 0")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate must be > 0 and weight_decay >= 0")
        StyleAugConfig(self.style_lambda, self.style_low_freq)

    @property
    def uses_cfs(self) -> bool:
        return self.variant in CFS_VARIANTS

    def model_config(self, in_channels: int = 3, num_classes: int = 2) -> ModelConfig:
        return ModelConfig(in_channels, num_classes, self.base_width, self.feat_channels,
                           self.depth, self.feature_stride, self.crop_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["style_lambda"] = list(self.style_lambda)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


PRESETS = {
    "fundus": dict(crop_size=384, batch_size=8, epochs=30,
                   weights=LossWeights(1.0, 0.05, 0.01)),
    "polyp": dict(crop_size=384, batch_size=8, epochs=50,
                  weights=LossWeights(0.5, 0.05, 0.05)),
    "scgm": dict(crop_size=288, batch_size=8, epochs=80,
                 weights=LossWeights(0.5, 0.05, 0.05)),
    # from-scratch desk model: a larger step size and a ramp-up on the unlabeled losses
    "desk": dict(crop_size=64, batch_size=8, epochs=60, steps_per_epoch=25, learning_rate=1e-3,
                 rampup_epochs=30.0, weights=LossWeights(1.0, 0.05, 0.01)),
}


def preset(name: str, **overrides) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return TrainConfig(**{**PRESETS[name], **overrides})


# -- seeding ------------------------------------------------------------------

def derive_seed(seed: int, *keys) -> int:
    """Independent 32-bit seed for the sub-stream named by ``keys``."""
    ints = [int(seed)] + [zlib.crc32(k.encode()) if isinstance(k, str) else int(k) for k in keys]
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


def set_global_seed(seed: int) -> None:
    """Seed the global python/numpy/torch generators.

    Package code draws from `derive_seed` streams instead; this only pins
    third-party code that reads the global state.
    """
    random.seed(seed)
    np.random.seed(derive_seed(seed, "global") % 2 ** 32)
    torch.manual_seed(seed)


def rampup_factor(cfg: TrainConfig, epochs_done: float) -> float:
    if cfg.rampup_epochs <= 0:
        return 1.0
    t = min(1.0, max(0.0, epochs_done / cfg.rampup_epochs))
    return math.exp(-5.0 * (1.0 - t) ** 2)


def build_model(cfg: TrainConfig, in_channels: int = 3, num_classes: int = 2,
                dtype=torch.float32) -> DACModel:
    seeds = (derive_seed(cfg.seed, "init", 1), derive_seed(cfg.seed, "init", 2))
    net = DACModel(cfg.model_config(in_channels, num_classes), seeds, cfg.variant,
                   head_seed=derive_seed(cfg.seed, "init", "heads"))
    return net.to(dtype)


def build_optimizer(net: DACModel, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay)


# -- data ----------------------------------------------------------------------

@dataclass
class StepBatch:
    labeled_x: np.ndarray  # (B, C, H, W)
    labeled_y: np.ndarray  # (B, K, H, W)
    x_i: np.ndarray | None = None  # (C, H, W), unlabeled
    x_j: np.ndarray | None = None


class DataPool:
    """All training/validation/target images of a manifest, loaded once.

    Domain ids of unlabeled images are dropped: the trainer only ever sees a
    pooled array.
    """

    def __init__(self, manifest: DatasetManifest, crop_size: int, val_count: int = 0, seed: int = 0):
        manifest.validate()
        if not manifest.labeled:
            raise DataError("manifest has no labeled records")
        load = lambda r: load_sample(manifest, r, crop_size)  # noqa: E731
        lab = [load(r) for r in manifest.labeled]
        self.labeled_x = np.stack([x for x, _ in lab])
        self.labeled_y = np.stack([y for _, y in lab])
        unl = manifest.unlabeled
        with_gt = [i for i, r in enumerate(unl) if r.has_label]
        rng = np.random.default_rng(derive_seed(seed, "val"))
        held = set(rng.permutation(with_gt)[:min(val_count, max(0, len(unl) - 2))].tolist())
        self.val = [load(unl[i]) for i in sorted(held)]
        self.unlabeled_x = np.stack([load(r)[0] for i, r in enumerate(unl) if i not in held]) \
            if len(unl) > len(held) else np.zeros((0,) + self.labeled_x.shape[1:], np.float32)
        self.target = [load(r) for r in manifest.target if r.has_label]
        self.num_classes = self.labeled_y.shape[1]
        self.in_channels = self.labeled_x.shape[1]


def epoch_batches(pool: DataPool, cfg: TrainConfig, epoch: int, steps: int):
    """Yield the ``steps`` StepBatches of one epoch (labeled batches cycle a fresh permutation)."""
    rng = np.random.default_rng(derive_seed(cfg.seed, "data", epoch))
    n_lab = len(pool.labeled_x)
    order = np.concatenate([rng.permutation(n_lab)
                            for _ in range(math.ceil(steps * cfg.batch_size / n_lab) + 1)])
    n_unl = len(pool.unlabeled_x)
    for s in range(steps):
        idx = order[s * cfg.batch_size:(s + 1) * cfg.batch_size]
        b = StepBatch(pool.labeled_x[idx], pool.labeled_y[idx])
        if cfg.variant != "supervised":
            if n_unl < 2:
                raise DataError("need at least two unlabeled images for co-training")
            i, j = rng.choice(n_unl, 2, replace=False)
            b.x_i, b.x_j = pool.unlabeled_x[i], pool.unlabeled_x[j]
        yield b


# -- one step -------------------------------------------------------------------

def train_step(net: DACModel, optimizer: torch.optim.Optimizer, batch: StepBatch, cfg: TrainConfig,
               seed: int, return_details: bool = False, weights: LossWeights | None = None):
    """One DAC update on a labeled batch and one unlabeled pair.

    Pipeline: style-augment the pair, one shared CutMix mask for the mixed
    originals, mixed augmentations and pseudo-labels, forward both
    sub-models, then CPS (confidence weighted), CFS, patch localization on
    sub-model 1, patch rotation on sub-model 2 and dice on the labeled batch.
    Components a variant disables are reported as 0. ``weights`` overrides
    ``cfg.weights`` (the training loop passes ramped weights).
    """
    net.train()
    rng = np.random.default_rng(seed)
    dtype = next(net.parameters()).dtype
    T = lambda a: torch.as_tensor(np.asarray(a), dtype=dtype)  # noqa: E731
    xl, gl = T(batch.labeled_x), T(batch.labeled_y)
    B = xl.shape[0]
    heads = VARIANT_HEADS[cfg.variant]
    co_train = cfg.variant != "supervised"
    details = {}

    extra = {1: [], 2: []}
    if co_train:
        xi_o, xj_o = batch.x_i, batch.x_j
        style = StyleAugConfig(cfg.style_lambda, cfg.style_low_freq)
        xi_a = fourier_style_transfer(xi_o, xj_o, None, style, rng)
        xj_a = fourier_style_transfer(xj_o, xi_o, None, style, rng)
        H, W = xi_o.shape[-2:]
        M = sample_cutmix_mask(H, W, cfg.tau1, cfg.tau2, rng)
        xo_mix, xa_mix = cutmix(xi_o, xj_o, M), cutmix(xi_a, xj_a, M)
        x_rot, r, rot_spec = rotate_random_patch(xj_a, cfg.alpha, M.beta, rng)
        with torch.no_grad():
            pair = T(np.stack([xi_o, xj_o]))
            q1, q2 = net.sub1(pair), net.sub2(pair)
        y = mixed_pseudo_label(q1[0:1], q1[1:2], M, cfg.sigma)
        y_hat = mixed_pseudo_label(q2[0:1], q2[1:2], M, cfg.sigma)
        for k in (1, 2):
            extra[k] = [xo_mix, xa_mix] + ([x_rot] if k in heads["rot"] else [])
        details.update(mask=M, x_a=(xi_a, xj_a), x_mix=(xo_mix, xa_mix), x_rot=x_rot, r=r,
                       rot_spec=rot_spec, pseudo=(y, y_hat), pseudo_probs=(q1, q2))

    out = {}
    for k in (1, 2):
        sub = net.sub(k)
        x = torch.cat([xl] + [T(e)[None] for e in extra[k]]) if extra[k] else xl
        f = sub.forward_features(x)
        p = sub.seg_head(f)
        out[k] = dict(p_l=p[:B], p_o=p[B:B + 1], p_a=p[B + 1:B + 2], f_o=f[B:B + 1],
                      f_a=f[B + 1:B + 2], f_rot=f[B + 2:B + 3])

    comps = {"sup": 0.5 * (dice_loss(out[1]["p_l"], gl, cfg.dice_eps)
                           + dice_loss(out[2]["p_l"], gl, cfg.dice_eps))}
    if co_train:
        V = prediction_variance(out[1]["p_o"], out[1]["p_a"])
        V_hat = prediction_variance(out[2]["p_o"], out[2]["p_a"])
        comps["cps"] = cps_loss(out[1]["p_o"], out[2]["p_o"], y, y_hat, V, V_hat)
        if cfg.uses_cfs:
            comps["cfs"] = cfs_loss(out[2]["f_a"], out[1]["f_o"], out[1]["f_a"], out[2]["f_o"])
        t = localization_target(M, H, W)
        for k in heads["loc"]:
            comps["loc"] = comps.get("loc", 0.0) + loc_loss(net.heads[f"loc{k}"](out[k]["f_a"]), T(t)[None])
        for k in heads["rot"]:
            comps["rot"] = comps.get("rot", 0.0) + rot_loss(net.heads[f"rot{k}"](out[k]["f_rot"]), [r])
        details.update(V=(V, V_hat), target=t)

    total, report = total_loss(comps, cfg.weights if weights is None else weights)
    if not math.isfinite(report.total) or report.total > cfg.divergence_threshold:
        raise NumericError(f"total loss {report.total} exceeds divergence threshold "
                           f"{cfg.divergence_threshold} (components: {report})")
    optimizer.zero_grad(set_to_none=True)
    total.backward()
    optimizer.step()
    if return_details:
        details.update(outputs=out, components=comps)
        return report, details
    return report


# -- checkpoints -----------------------------------------------------------------

@dataclass
class CheckpointRecord:
    epoch: int
    global_step: int
    model_state: dict
    optimizer_state: dict
    config: dict
    rng_state: dict
    model_meta: dict = field(default_factory=dict)
    version: int = CHECKPOINT_VERSION


def save_checkpoint(record: CheckpointRecord, path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    torch.save(asdict(record), tmp)
    tmp.replace(path)


def load_checkpoint(path) -> CheckpointRecord:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(raw, dict) or "version" not in raw:
        raise CheckpointVersionError(f"{path} is not a dacseg checkpoint")
    if raw["version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{path} has checkpoint version {raw['version']}, this build reads version {CHECKPOINT_VERSION}")
    return CheckpointRecord(**raw)


def model_from_checkpoint(record: CheckpointRecord) -> tuple[DACModel, TrainConfig]:
    cfg = TrainConfig.from_dict(record.config)
    meta = record.model_meta
    net = build_model(cfg, meta.get("in_channels", 3), meta.get("num_classes", 2))
    net.load_state_dict(record.model_state)
    return net, cfg


def _rng_snapshot() -> dict:
    return {"torch": torch.get_rng_state(), "numpy": np.random.get_state(), "python": random.getstate()}


# -- full run ----------------------------------------------------------------------

def record_key(r) -> str:
    return f"{r.domain}:{r.ref}"


def provenance(cfg: TrainConfig) -> str:
    return f"dacseg {__version__} seed={cfg.seed} config_hash={cfg.config_hash()} variant={cfg.variant}"


def steps_for(cfg: TrainConfig, pool: DataPool) -> int:
    if cfg.steps_per_epoch is not None:
        return cfg.steps_per_epoch
    return max(1, len(pool.unlabeled_x) // 2)


def run_training(cfg: TrainConfig, manifest: DatasetManifest, out_dir=None, resume_from=None,
                 pool: DataPool | None = None, on_step=None):
    """Train a DAC model on ``manifest``.

    Returns ``(final CheckpointRecord, metrics log)``; the log holds one dict
    per epoch with mean losses and validation DSC on held-out source images.
    With ``out_dir`` the latest checkpoint, per-step loss CSV and per-epoch
    metrics CSV are written there (each with a provenance header).
    """
    set_global_seed(cfg.seed)
    pool = pool or DataPool(manifest, cfg.crop_size, cfg.val_count, cfg.seed)
    net = build_model(cfg, pool.in_channels, pool.num_classes)
    opt = build_optimizer(net, cfg)
    start_epoch, global_step, metrics = 0, 0, []
    if resume_from is not None:
        rec = load_checkpoint(resume_from)
        if TrainConfig.from_dict(rec.config) != cfg:
            raise ConfigError(f"checkpoint {resume_from} was produced by a different configuration")
        net.load_state_dict(rec.model_state)
        opt.load_state_dict(rec.optimizer_state)
        start_epoch, global_step = rec.epoch + 1, rec.global_step
        metrics = list(rec.rng_state.get("metrics", []))
    steps = steps_for(cfg, pool)
    out_dir = Path(out_dir) if out_dir is not None else None
    loss_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        mode = "a" if resume_from is not None else "w"
        loss_fh = (out_dir / "train_log.csv").open(mode, newline="")
        if mode == "w":
            loss_fh.write(f"# {provenance(cfg)}\n")
            csv.writer(loss_fh).writerow(LOSS_COLUMNS)
    # what the model saw, so evaluation can refuse leaked targets
    meta = {"in_channels": pool.in_channels, "num_classes": pool.num_classes,
            "source_domains": list(manifest.source_domains),
            "labeled_domain": manifest.labeled_domain,
            "train_records": sorted(record_key(r) for r in manifest.labeled + manifest.unlabeled)}
    record = None
    try:
        for epoch in range(start_epoch, cfg.epochs):
            sums = np.zeros(6)
            for batch in epoch_batches(pool, cfg, epoch, steps):
                w = cfg.weights.scaled(rampup_factor(cfg, global_step / steps))
                rep = train_step(net, opt, batch, cfg, derive_seed(cfg.seed, "augment", global_step), weights=w)
                global_step += 1
                sums += rep.as_row()
                if loss_fh is not None:
                    csv.writer(loss_fh).writerow([global_step] + [f"{v:.8g}" for v in rep.as_row()])
                if on_step is not None:
                    on_step(global_step, rep)
            row = {"epoch": epoch + 1, "step": global_step}
            row.update({k: v / steps for k, v in zip(LOSS_COLUMNS[1:], sums)})
            if pool.val:
                res = evaluate_domain(net.sub1, net.sub2, pool.val, "val", cfg.sigma)
                row.update({f"val_dsc_{c + 1}": float(v) for c, v in enumerate(res.per_class_dsc)})
                row["val_dsc"] = res.mean_dsc
            metrics.append(row)
            log.info("epoch %d/%d %s", epoch + 1, cfg.epochs,
                     " ".join(f"{k}={v:.4f}" for k, v in row.items() if isinstance(v, float)))
            record = CheckpointRecord(
                epoch=epoch, global_step=global_step,
                model_state={k: v.clone() for k, v in net.state_dict().items()},
                optimizer_state=opt.state_dict(), config=cfg.to_dict(),
                rng_state={**_rng_snapshot(), "metrics": list(metrics)},
                model_meta=meta)
            if out_dir is not None:
                save_checkpoint(record, out_dir / "last.pt")
                write_metrics_csv(metrics, out_dir / "metrics.csv", cfg)
                loss_fh.flush()
    finally:
        if loss_fh is not None:
            loss_fh.close()
    if record is None:  # resumed a finished run
        record = load_checkpoint(resume_from)
    return record, metrics


def write_metrics_csv(metrics: list[dict], path, cfg: TrainConfig) -> None:
    cols = list(dict.fromkeys(k for row in metrics for k in row))
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# {provenance(cfg)}\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in metrics:
            w.writerow({k: f"{v:.8g}" if isinstance(v, float) else v for k, v in row.items()})


def supervised_baseline(cfg: TrainConfig) -> TrainConfig:
    """All loss weights zero and labeled data only."""
    return replace(cfg, variant="supervised", weights=LossWeights(0.0, 0.0, 0.0))
