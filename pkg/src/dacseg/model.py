"""Co-trained sub-models and the two asymmetric auxiliary heads.

A sub-model is an extractor ``F`` (U-Net style encoder with ``depth``
downsampling stages, decoded back to ``feature_stride``) followed by a
segmentation head ``H`` that upsamples to full resolution and emits one
independent sigmoid probability per class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 3
    num_classes: int = 2
    base_width: int = 8
    feat_channels: int = 32
    depth: int = 4
    feature_stride: int = 4
    input_size: int | None = None  # enforced when set

    def __post_init__(self):
        s = self.feature_stride
        if s < 1 or s & (s - 1):
            raise ConfigError("feature_stride must be a power of two")
        if int(math.log2(s)) > self.depth:
            raise ConfigError("feature_stride cannot exceed 2**depth")
        if self.input_size is not None and self.input_size % (2 ** self.depth):
            raise ConfigError(f"input_size {self.input_size} not divisible by 2**depth")


def _groups(c: int) -> int:
    return max(1, min(4, c // 4))


class ConvBlock(nn.Sequential):
    def __init__(self, cin, cout):
        super().__init__(
            nn.Conv2d(cin, cout, 3, padding=1, bias=False),
            nn.GroupNorm(_groups(cout), cout),
            nn.ReLU(inplace=True),
            nn.Conv2d(cout, cout, 3, padding=1, bias=False),
            nn.GroupNorm(_groups(cout), cout),
            nn.ReLU(inplace=True),
        )


class Extractor(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        w = cfg.base_width
        widths = [w] + [w * 2 ** min(i + 1, 3) for i in range(cfg.depth)]
        self.stem = ConvBlock(cfg.in_channels, widths[0])
        self.down = nn.ModuleList(ConvBlock(widths[i], widths[i + 1]) for i in range(cfg.depth))
        n_up = cfg.depth - int(math.log2(cfg.feature_stride))
        self.up = nn.ModuleList()
        c = widths[-1]
        for k in range(n_up):
            skip = widths[cfg.depth - 1 - k]
            cout = cfg.feat_channels if k == n_up - 1 else skip
            self.up.append(ConvBlock(c + skip, cout))
            c = cout
        self.proj = nn.Conv2d(c, cfg.feat_channels, 1) if n_up == 0 else nn.Identity()

    def forward(self, x):
        skips = [self.stem(x)]
        for block in self.down:
            skips.append(block(F.max_pool2d(skips[-1], 2)))
        h = skips.pop()
        for block in self.up:
            s = skips.pop()
            h = block(torch.cat([F.interpolate(h, size=s.shape[-2:], mode="nearest"), s], dim=1))
        return self.proj(h)


class SegHead(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        c = cfg.feat_channels
        n = int(math.log2(cfg.feature_stride))
        self.up = nn.ModuleList()
        for _ in range(n):
            self.up.append(nn.Sequential(nn.Conv2d(c, c // 2, 3, padding=1), nn.ReLU(inplace=True)))
            c //= 2
        self.out = nn.Conv2d(c, cfg.num_classes, 1)

    def forward(self, f, logits=False):
        h = f
        for block in self.up:
            h = block(F.interpolate(h, scale_factor=2, mode="bilinear", align_corners=False))
        z = self.out(h)
        return z if logits else torch.sigmoid(z)


class SubModel(nn.Module):
    """One extractor + segmentation head pair, initialized from ``init_seed``."""

    def __init__(self, cfg: ModelConfig, init_seed: int):
        super().__init__()
        self.cfg = cfg
        self.init_seed = init_seed
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(init_seed)
            self.extractor = Extractor(cfg)
            self.seg_head = SegHead(cfg)

    def _check(self, x):
        if x.dim() != 4 or x.shape[1] != self.cfg.in_channels:
            raise InputError(f"expected (B, {self.cfg.in_channels}, H, W) input, got {tuple(x.shape)}")
        size = self.cfg.input_size
        if size is not None and tuple(x.shape[-2:]) != (size, size):
            raise InputError(f"expected {size}x{size} input, got {tuple(x.shape[-2:])}")
        if size is None and (x.shape[-1] % 2 ** self.cfg.depth or x.shape[-2] % 2 ** self.cfg.depth):
            raise InputError(f"input size {tuple(x.shape[-2:])} not divisible by {2 ** self.cfg.depth}")

    def forward_features(self, x):
        self._check(x)
        return self.extractor(x)

    def forward_segmentation(self, x):
        return self.seg_head(self.forward_features(x))

    forward = forward_segmentation


class LocHead(nn.Module):
    """Global average pool, two affine stages, sigmoid: predicts normalized (c_x, c_y, d)."""

    def __init__(self, feat_channels: int, hidden: int = 32):
        super().__init__()
        self.fc = nn.Sequential(nn.Linear(feat_channels, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, 3))

    def forward(self, f):
        return torch.sigmoid(self.fc(f.mean(dim=(-2, -1))))


class RotHead(nn.Module):
    """Global average pool, two affine stages: 4 rotation logits."""

    def __init__(self, feat_channels: int, hidden: int = 32):
        super().__init__()
        self.fc = nn.Sequential(nn.Linear(feat_channels, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, 4))

    def forward(self, f):
        return self.fc(f.mean(dim=(-2, -1)))


def forward_loc(head: LocHead, features):
    return head(features)


def forward_rot(head: RotHead, features):
    return head(features)


# Auxiliary-head layout per training variant: which sub-model (1 or 2) gets which head.
VARIANT_HEADS = {
    "full": {"loc": (1,), "rot": (2,)},
    "cps_only": {"loc": (), "rot": ()},
    "cps+cfs": {"loc": (), "rot": ()},
    "cps+aux": {"loc": (1,), "rot": (2,)},
    "symmetric_loc": {"loc": (1, 2), "rot": ()},
    "symmetric_rot": {"loc": (), "rot": (1, 2)},
    "supervised": {"loc": (), "rot": ()},
}


class DACModel(nn.Module):
    """Both sub-models plus the auxiliary heads of a training variant.

    Heads are stored under keys ``loc1``, ``rot2`` etc. Evaluation only ever
    goes through `sub1` and `sub2`.
    """

    def __init__(self, cfg: ModelConfig, seeds: tuple[int, int], variant: str = "full", head_seed: int = 0):
        super().__init__()
        if seeds[0] == seeds[1]:
            raise ConfigError("the two sub-models need distinct init seeds")
        if variant not in VARIANT_HEADS:
            raise ConfigError(f"unknown variant {variant!r}")
        self.cfg = cfg
        self.variant = variant
        self.sub1 = SubModel(cfg, seeds[0])
        self.sub2 = SubModel(cfg, seeds[1])
        heads = {}
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(head_seed)
            for kind, cls in (("loc", LocHead), ("rot", RotHead)):
                for k in VARIANT_HEADS[variant][kind]:
                    heads[f"{kind}{k}"] = cls(cfg.feat_channels)
        self.heads = nn.ModuleDict(heads)

    def sub(self, k: int) -> SubModel:
        return self.sub1 if k == 1 else self.sub2

    @torch.no_grad()
    def predict_proba(self, x):
        """Ensemble probability map (mean of the two sub-models)."""
        return 0.5 * (self.sub1.forward_segmentation(x) + self.sub2.forward_segmentation(x))
