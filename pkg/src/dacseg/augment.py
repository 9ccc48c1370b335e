"""Augmentations: Fourier amplitude style transfer, CutMix and random patch rotation.

All functions take ``(C, H, W)`` numpy arrays. Random draws accept either an
integer seed or a ``numpy.random.Generator``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InputError


@dataclass(frozen=True)
class StyleAugConfig:
    lambda_range: tuple[float, float] = (0.0, 1.0)
    low_freq_fraction: float = 0.1

    def __post_init__(self):
        lo, hi = self.lambda_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigError(f"lambda_range must satisfy 0 <= lo <= hi <= 1, got {self.lambda_range}")
        if not 0 < self.low_freq_fraction <= 0.5:
            raise ConfigError("low_freq_fraction must lie in (0, 0.5]")


@dataclass(frozen=True)
class CutMixMask:
    """Binary mask that is 1 everywhere except one square zero-valued patch.

    ``center`` is ``(c_x, c_y)`` in continuous pixel coordinates (pixel edges
    at integers), ``half_side`` is ``d``; the patch covers columns
    ``[c_x - d, c_x + d)`` and rows ``[c_y - d, c_y + d)``.
    """

    mask: np.ndarray  # (1, H, W) float32
    beta: float
    center: tuple[float, float]
    half_side: float

    @property
    def side(self) -> int:
        return int(round(2 * self.half_side))

    @property
    def origin(self) -> tuple[int, int]:
        """Top-left corner ``(x0, y0)`` of the zero patch."""
        return int(round(self.center[0] - self.half_side)), int(round(self.center[1] - self.half_side))


@dataclass(frozen=True)
class RotPatchSpec:
    x0: int
    y0: int
    side: int
    rotation: int  # class index k, rotation by k * 90 degrees counter-clockwise

    @property
    def degrees(self) -> int:
        return 90 * self.rotation


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# -- Fourier style ------------------------------------------------------------

def _window(n: int, frac: float) -> slice:
    # half-width kept below n/2 so the window stays symmetric about DC
    b = min(int(np.floor(frac * n)), (n - 1) // 2)
    c = n // 2
    return slice(c - b, c + b + 1)


def low_freq_window(shape: tuple[int, int], frac: float) -> np.ndarray:
    """Boolean mask over the centered (fftshifted) spectrum marking mixed bins."""
    h, w = shape
    win = np.zeros((h, w), dtype=bool)
    win[_window(h, frac), _window(w, frac)] = True
    return win


def amplitude_mix(content: np.ndarray, style: np.ndarray, lam: float, low_freq_fraction: float) -> np.ndarray:
    """Unclipped core of `fourier_style_transfer` (float64).

    The centered amplitude spectrum of ``content`` is replaced inside the
    low-frequency window by ``(1 - lam) * A_content + lam * A_style``; the
    phase of ``content`` is kept everywhere.
    """
    content = np.asarray(content, dtype=np.float64)
    style = np.asarray(style, dtype=np.float64)
    if content.shape != style.shape:
        raise InputError(f"content {content.shape} and style {style.shape} differ in shape")
    if not 0 <= lam <= 1:
        raise InputError(f"lam must be in [0, 1], got {lam}")
    fc = np.fft.fftshift(np.fft.fft2(content, axes=(-2, -1)), axes=(-2, -1))
    fs = np.fft.fftshift(np.fft.fft2(style, axes=(-2, -1)), axes=(-2, -1))
    amp_c, pha_c = np.abs(fc), np.angle(fc)
    amp = amp_c.copy()
    win = low_freq_window(content.shape[-2:], low_freq_fraction)
    amp[..., win] = (1 - lam) * amp_c[..., win] + lam * np.abs(fs)[..., win]
    mixed = np.fft.ifftshift(amp * np.exp(1j * pha_c), axes=(-2, -1))
    return np.fft.ifft2(mixed, axes=(-2, -1)).real


def fourier_style_transfer(content: np.ndarray, style: np.ndarray, lam: float | None = None,
                           cfg: StyleAugConfig = StyleAugConfig(), seed=None) -> np.ndarray:
    """Give ``content`` the low-frequency amplitude ("style") of ``style``.

    ``lam`` is drawn from ``cfg.lambda_range`` when None.
    """
    if lam is None:
        lam = float(_rng(seed).uniform(*cfg.lambda_range))
    out = amplitude_mix(content, style, lam, cfg.low_freq_fraction)
    return np.clip(out, 0.0, 1.0).astype(np.asarray(content).dtype)


# -- CutMix ---------------------------------------------------------------------

def make_cutmix_mask(H: int, W: int, beta: float, origin: tuple[int, int] | None = None) -> CutMixMask:
    """Mask whose zero patch has side ``round(beta * min(H, W))`` at ``origin=(x0, y0)``
    (centered when None)."""
    side = int(round(beta * min(H, W)))
    if not 1 <= side <= min(H, W):
        raise ConfigError(f"beta={beta} gives patch side {side} outside [1, {min(H, W)}]")
    if origin is None:
        origin = ((W - side) // 2, (H - side) // 2)
    x0, y0 = origin
    if not (0 <= x0 <= W - side and 0 <= y0 <= H - side):
        raise ConfigError(f"patch at {origin} with side {side} leaves the {H}x{W} image")
    mask = np.ones((1, H, W), dtype=np.float32)
    mask[:, y0:y0 + side, x0:x0 + side] = 0
    d = side / 2
    return CutMixMask(mask, float(beta), (x0 + d, y0 + d), d)


def sample_cutmix_mask(H: int, W: int, tau1: float = 0.2, tau2: float = 0.8, seed=None) -> CutMixMask:
    """Draw ``beta ~ U(tau1, tau2)`` and a patch origin uniformly among in-image positions."""
    if not 0 < tau1 < tau2 < 1:
        raise ConfigError(f"need 0 < tau1 < tau2 < 1, got tau1={tau1}, tau2={tau2}")
    rng = _rng(seed)
    beta = float(rng.uniform(tau1, tau2))
    side = max(1, int(round(beta * min(H, W))))
    x0 = int(rng.integers(0, W - side + 1))
    y0 = int(rng.integers(0, H - side + 1))
    return make_cutmix_mask(H, W, beta, (x0, y0))


def _mask_like(M, x):
    m = M.mask if isinstance(M, CutMixMask) else M
    try:
        import torch

        if isinstance(x, torch.Tensor):
            return torch.as_tensor(m, dtype=x.dtype, device=x.device)
    except ImportError:  # pragma: no cover
        pass
    return np.asarray(m, dtype=np.asarray(x).dtype)


def cutmix(x_i, x_j, M):
    """``x_i`` where the mask is 1 and ``x_j`` where it is 0.

    Works for numpy arrays and torch tensors; a leading batch axis broadcasts.
    """
    if tuple(x_i.shape) != tuple(x_j.shape):
        raise InputError(f"cutmix inputs differ in shape: {tuple(x_i.shape)} vs {tuple(x_j.shape)}")
    m = _mask_like(M, x_i)
    if tuple(m.shape[-2:]) != tuple(x_i.shape[-2:]):
        raise InputError(f"mask {tuple(m.shape)} does not match images {tuple(x_i.shape)}")
    return x_i * m + x_j * (1 - m)


def localization_target(M: CutMixMask, H: int, W: int) -> np.ndarray:
    """Normalized ``(c_x, c_y, d)`` of the mixed patch."""
    cx, cy = M.center
    return np.array([cx / W, cy / H, M.half_side / min(H, W)], dtype=np.float64)


def mask_from_target(t, H: int, W: int) -> CutMixMask:
    """Inverse of `localization_target`."""
    cx, cy, d = float(t[0]) * W, float(t[1]) * H, float(t[2]) * min(H, W)
    side = int(round(2 * d))
    x0, y0 = int(round(cx - side / 2)), int(round(cy - side / 2))
    return make_cutmix_mask(H, W, side / min(H, W), (x0, y0))


# -- random patch rotation ------------------------------------------------------------

def rotate_patch(x: np.ndarray, spec: RotPatchSpec) -> np.ndarray:
    out = np.array(x, copy=True)
    ys, xs = slice(spec.y0, spec.y0 + spec.side), slice(spec.x0, spec.x0 + spec.side)
    out[..., ys, xs] = np.rot90(out[..., ys, xs], k=spec.rotation, axes=(-2, -1))
    return out


def rotate_random_patch(x: np.ndarray, alpha: float, beta: float, seed=None,
                        rotation: int | None = None) -> tuple[np.ndarray, int, RotPatchSpec]:
    """Rotate a random square patch of side ``round(alpha * beta * min(H, W))`` in place.

    Returns the image, the rotation class ``r`` (multiples of 90 degrees,
    counter-clockwise) and the patch geometry.
    """
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    H, W = x.shape[-2:]
    side = int(round(alpha * beta * min(H, W)))
    if side < 8:
        raise ConfigError(f"rotation patch side {side} < 8 (alpha={alpha}, beta={beta}, size {H}x{W})")
    if side > min(H, W):
        raise ConfigError(f"rotation patch side {side} exceeds image size {H}x{W}")
    rng = _rng(seed)
    x0 = int(rng.integers(0, W - side + 1))
    y0 = int(rng.integers(0, H - side + 1))
    r = int(rng.integers(0, 4)) if rotation is None else int(rotation)
    if r not in (0, 1, 2, 3):
        raise InputError(f"rotation class must be in 0..3, got {r}")
    spec = RotPatchSpec(x0, y0, side, r)
    return rotate_patch(x, spec), r, spec
