"""Training signals for dual-supervised asymmetric co-training.

Probability maps are ``(B, C, H, W)`` tensors of independent per-class
probabilities; unbatched ``(C, H, W)`` inputs are accepted everywhere.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F

from .augment import CutMixMask, cutmix
from .errors import ConfigError, InputError, NumericError

PROB_EPS = 1e-7
COMPONENTS = ("sup", "cps", "cfs", "loc", "rot")


@dataclass(frozen=True)
class LossWeights:
    lambda_cps: float = 1.0
    lambda_cfs: float = 0.05
    lambda_ac: float = 0.01

    def __post_init__(self):
        for k, v in asdict(self).items():
            if not math.isfinite(v) or v < 0:
                raise ConfigError(f"{k} must be finite and >= 0, got {v}")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.lambda_cps * factor, self.lambda_cfs * factor, self.lambda_ac * factor)


@dataclass(frozen=True)
class LossReport:
    sup: float
    cps: float
    cfs: float
    loc: float
    rot: float
    total: float

    def as_row(self) -> list[float]:
        return [self.sup, self.cps, self.cfs, self.loc, self.rot, self.total]


def _same_shape(*ts):
    shapes = {tuple(t.shape) for t in ts}
    if len(shapes) != 1:
        raise InputError(f"shape mismatch: {sorted(shapes)}")


def _batched(t):
    return t if t.dim() == 4 else t.unsqueeze(0)


def _check_probs(p, name):
    if p.numel() and (p.min() < 0 or p.max() > 1):
        raise InputError(f"{name} has values outside [0, 1]")


def dice_loss(p, g, eps: float = 1.0):
    """Soft dice loss per sample and class, ``1 - (2 sum(pg) + eps) / (sum(p) + sum(g) + eps)``, averaged."""
    _same_shape(p, g)
    if eps <= 0:
        raise InputError("dice smoothing eps must be > 0")
    p, g = _batched(p), _batched(g).to(p.dtype)
    inter = (p * g).sum(dim=(-2, -1))
    denom = p.sum(dim=(-2, -1)) + g.sum(dim=(-2, -1))
    return (1 - (2 * inter + eps) / (denom + eps)).mean()


def binarize(p, sigma: float = 0.5):
    return (p > sigma).to(p.dtype)


def mixed_pseudo_label(p_i, p_j, M: CutMixMask, sigma: float = 0.5):
    """Hard pseudo-label of the CutMix-composited probability maps (no gradient)."""
    _same_shape(p_i, p_j)
    if not 0 < sigma < 1:
        raise InputError(f"sigma must be in (0, 1), got {sigma}")
    with torch.no_grad():
        return binarize(cutmix(p_i.detach(), p_j.detach(), M), sigma)


def prediction_variance(p_o, p_a):
    """Per-pixel mean over classes of ``(p_o - p_a) ** 2``, shape ``(B, 1, H, W)``."""
    _same_shape(p_o, p_a)
    return ((_batched(p_o) - _batched(p_a)) ** 2).mean(dim=1, keepdim=True)


def pixel_bce(p, y):
    """Per-pixel binary cross-entropy averaged over class channels, ``(B, 1, H, W)``."""
    p = _batched(p).clamp(PROB_EPS, 1 - PROB_EPS)
    y = _batched(y).to(p.dtype)
    return -(y * torch.log(p) + (1 - y) * torch.log1p(-p)).mean(dim=1, keepdim=True)


def cps_loss(p_o, p_hat_o, y, y_hat, V, V_hat):
    """Confidence-weighted cross pseudo supervision.

    ``mean(exp(-V) * ce(p_hat_o, y)) + mean(exp(-V_hat) * ce(p_o, y_hat)) + mean(V) + mean(V_hat)``
    where ``y`` and ``V`` come from sub-model 1 and supervise sub-model 2,
    and vice versa.
    """
    _same_shape(p_o, p_hat_o, y, y_hat)
    _same_shape(V, V_hat)
    _check_probs(p_o, "p_o")
    _check_probs(p_hat_o, "p_hat_o")
    V, V_hat = _batched(V), _batched(V_hat)
    if V.shape[-2:] != _batched(p_o).shape[-2:]:
        raise InputError(f"confidence map {tuple(V.shape)} does not match {tuple(p_o.shape)}")
    term1 = (torch.exp(-V) * pixel_bce(p_hat_o, y.detach())).mean()
    term2 = (torch.exp(-V_hat) * pixel_bce(p_o, y_hat.detach())).mean()
    return term1 + term2 + V.mean() + V_hat.mean()


def cfs_loss(f_hat_a, f_o, f_a, f_hat_o):
    """Cross feature supervision: ``mse(f_hat_a, f_o) + mse(f_a, f_hat_o)``; the
    original-image features act as constant targets."""
    _same_shape(f_hat_a, f_o, f_a, f_hat_o)
    return F.mse_loss(f_hat_a, f_o.detach()) + F.mse_loss(f_a, f_hat_o.detach())


def loc_loss(t_hat, t):
    """Mean absolute error between predicted and true normalized (c_x, c_y, d)."""
    t = torch.as_tensor(t, dtype=t_hat.dtype, device=t_hat.device)
    if t.shape != t_hat.shape:
        t = t.expand_as(t_hat) if t.dim() < t_hat.dim() else t
    _same_shape(t_hat, t)
    if t.numel() and (t.min() < 0 or t.max() > 1):
        raise InputError("localization target outside [0, 1]")
    return (t_hat - t).abs().mean()


def rot_loss(logits, r):
    """Cross-entropy of rotation logits ``(B, 4)`` or ``(4,)`` against class ``r``."""
    r = torch.as_tensor(r, dtype=torch.long, device=logits.device)
    if r.numel() and (r.min() < 0 or r.max() > 3):
        raise InputError(f"rotation class must be in 0..3, got {r.tolist()}")
    if logits.dim() == 1:
        logits, r = logits.unsqueeze(0), r.reshape(1)
    if logits.shape[-1] != 4:
        raise InputError(f"expected 4 rotation logits, got {tuple(logits.shape)}")
    return F.cross_entropy(logits, r.reshape(-1))


def total_loss(components: dict, w: LossWeights):
    """Weighted sum ``sup + l_cps*cps + l_cfs*cfs + l_ac*(loc + rot)``.

    ``components`` maps each of sup/cps/cfs/loc/rot to a scalar tensor or
    float (missing entries count as 0). Returns ``(total, LossReport)``.
    """
    vals = {}
    for k in COMPONENTS:
        v = components.get(k, 0.0)
        fv = float(v.detach()) if isinstance(v, torch.Tensor) else float(v)
        if not math.isfinite(fv):
            raise NumericError(f"loss component {k!r} is not finite ({fv})")
        vals[k] = v
    total = (vals["sup"] + w.lambda_cps * vals["cps"] + w.lambda_cfs * vals["cfs"]
             + w.lambda_ac * (vals["loc"] + vals["rot"]))
    as_float = {k: float(v.detach()) if isinstance(v, torch.Tensor) else float(v) for k, v in vals.items()}
    ft = float(total.detach()) if isinstance(total, torch.Tensor) else float(total)
    return total, LossReport(total=ft, **as_float)
