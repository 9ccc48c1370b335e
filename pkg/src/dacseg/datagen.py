"""Synthetic multi-domain segmentation data and CD-SSDG split manifests.

Scenes are fundus-like: a bright elliptical "disc" (class 1) containing a
smaller, low-contrast "cup" (class 2) on a textured background crossed by
dark vessels. Domains differ only in appearance (`DomainStyle`), so label
semantics are shared across domains while the input distribution shifts.

Images are float32 arrays of shape ``(C, H, W)`` with values in ``[0, 1]``;
masks are uint8 arrays of shape ``(num_classes, H, W)``.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError, InputError

SPLITS = ("labeled", "unlabeled", "target")
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".npy")
MASK_EXTS = (".npy", ".png", ".bmp", ".tif", ".tiff")
MANIFEST_MAGIC = "# dacseg-manifest 1"


@dataclass(frozen=True)
class DomainStyle:
    domain_id: str
    brightness_gain: float = 1.0
    contrast_gain: float = 1.0
    channel_shift: tuple[float, ...] = (0.0, 0.0, 0.0)
    noise_sigma: float = 0.0
    blur_radius: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "channel_shift", tuple(float(s) for s in self.channel_shift))
        scalars = [self.brightness_gain, self.contrast_gain, self.noise_sigma, self.blur_radius]
        if not all(math.isfinite(v) for v in scalars + list(self.channel_shift)):
            raise ConfigError(f"non-finite style parameter in {self}")
        if self.brightness_gain <= 0 or self.contrast_gain <= 0:
            raise ConfigError("brightness_gain and contrast_gain must be > 0")
        if self.noise_sigma < 0 or self.blur_radius < 0:
            raise ConfigError("noise_sigma and blur_radius must be >= 0")
        if any(abs(s) > 0.3 for s in self.channel_shift):
            raise ConfigError("channel_shift entries must lie in [-0.3, 0.3]")

    def params(self) -> tuple:
        return tuple(v for k, v in asdict(self).items() if k != "domain_id")


@dataclass(frozen=True)
class SceneSpec:
    image_side: int = 64
    num_classes: int = 2
    nested: bool = True
    fg_fraction_range: tuple[float, float] = (0.08, 0.30)

    def __post_init__(self):
        lo, hi = self.fg_fraction_range
        if not lo < hi:
            raise ConfigError(f"fg_fraction_range needs lo < hi, got {self.fg_fraction_range}")
        if not (0 < lo and hi < 1):
            raise ConfigError("fg_fraction_range must lie inside (0, 1)")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        if self.nested and self.num_classes != 2:
            raise ConfigError("nested scenes require num_classes == 2")
        if self.image_side < 32:
            raise ConfigError("image_side must be >= 32")


@dataclass
class Record:
    ref: int | str  # scene seed (synthetic) or image path (folder)
    domain: str
    split: str
    has_label: bool = True


@dataclass
class DatasetManifest:
    source_domains: list[str]
    labeled_domain: str | None
    labeled_ratio: float
    target_domain: str | None
    records: list[Record]
    styles: dict[str, DomainStyle] = field(default_factory=dict)
    scene: SceneSpec | None = None
    root: str | None = None

    @property
    def K(self) -> int:
        return len(self.source_domains)

    @property
    def synthetic(self) -> bool:
        return self.scene is not None

    def split(self, name: str) -> list[Record]:
        return [r for r in self.records if r.split == name]

    @property
    def labeled(self) -> list[Record]:
        return self.split("labeled")

    @property
    def unlabeled(self) -> list[Record]:
        return self.split("unlabeled")

    @property
    def target(self) -> list[Record]:
        return self.split("target")

    def validate(self) -> None:
        """Raise DataError unless the CD-SSDG invariants hold."""
        for r in self.records:
            if r.split not in SPLITS:
                raise DataError(f"unknown split {r.split!r} for record {r.ref}")
        if self.labeled_domain is None or self.target_domain is None:
            # unsplit pool, e.g. straight out of load_folder_dataset
            return
        if self.labeled_domain not in self.source_domains:
            raise DataError(f"labeled domain {self.labeled_domain!r} is not a source domain")
        if self.target_domain in self.source_domains:
            raise DataError(f"target domain {self.target_domain!r} is also a source domain")
        for r in self.labeled:
            if r.domain != self.labeled_domain:
                raise DataError(f"labeled record {r.ref} comes from domain {r.domain!r}")
            if not r.has_label:
                raise DataError(f"labeled record {r.ref} has no ground truth")
        for r in self.records:
            if r.split in ("labeled", "unlabeled") and r.domain == self.target_domain:
                raise DataError(f"target-domain record {r.ref} leaked into split {r.split!r}")
            if r.split == "target" and r.domain != self.target_domain:
                raise DataError(f"record {r.ref} of domain {r.domain!r} is in the target split")
        keys = lambda recs: {(r.domain, r.ref) for r in recs}  # noqa: E731
        if keys(self.labeled) & keys(self.unlabeled):
            raise DataError("labeled and unlabeled splits overlap")
        unlabeled_domains = {r.domain for r in self.unlabeled}
        for d in self.source_domains:
            if d != self.labeled_domain and d not in unlabeled_domains:
                raise DataError(f"source domain {d!r} contributes no unlabeled records")

    # -- serialization -------------------------------------------------------

    def to_text(self) -> str:
        lines = [MANIFEST_MAGIC]
        lines.append(f"# K\t{self.K}")
        lines.append(f"# source_domains\t{','.join(self.source_domains)}")
        lines.append(f"# labeled_domain\t{self.labeled_domain or ''}")
        lines.append(f"# labeled_ratio\t{self.labeled_ratio!r}")
        lines.append(f"# target_domain\t{self.target_domain or ''}")
        if self.scene is not None:
            s = self.scene
            lo, hi = s.fg_fraction_range
            lines.append(
                f"# scene\timage_side={s.image_side}\tnum_classes={s.num_classes}"
                f"\tnested={int(s.nested)}\tfg_fraction_range={lo!r},{hi!r}"
            )
        if self.root is not None:
            lines.append(f"# root\t{self.root}")
        for d in sorted(self.styles):
            st = self.styles[d]
            lines.append(
                f"# style\t{d}\tbrightness_gain={st.brightness_gain!r}"
                f"\tcontrast_gain={st.contrast_gain!r}"
                f"\tchannel_shift={','.join(repr(v) for v in st.channel_shift)}"
                f"\tnoise_sigma={st.noise_sigma!r}\tblur_radius={st.blur_radius!r}"
            )
        lines.append("path_or_seed\tdomain\tsplit\thas_label")
        for r in self.records:
            lines.append(f"{r.ref}\t{r.domain}\t{r.split}\t{int(r.has_label)}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "DatasetManifest":
        lines = text.splitlines()
        if not lines or lines[0] != MANIFEST_MAGIC:
            raise DataError("not a dacseg manifest (missing header line)")
        header: dict[str, list[str]] = {}
        styles = {}
        records = []
        scene = None
        body_started = False
        for ln in lines[1:]:
            if not ln.strip():
                continue
            if ln.startswith("# "):
                key, *vals = ln[2:].split("\t")
                if key == "style":
                    styles[vals[0]] = _parse_style(vals[0], vals[1:])
                elif key == "scene":
                    kv = dict(v.split("=", 1) for v in vals)
                    lo, hi = (float(v) for v in kv["fg_fraction_range"].split(","))
                    scene = SceneSpec(int(kv["image_side"]), int(kv["num_classes"]),
                                      bool(int(kv["nested"])), (lo, hi))
                else:
                    header[key] = vals
                continue
            if not body_started:
                body_started = True  # column header row
                continue
            ref, domain, split, has_label = ln.split("\t")
            records.append(Record(int(ref) if scene is not None else ref, domain, split,
                                  bool(int(has_label))))
        sources = [d for d in header["source_domains"][0].split(",") if d]
        manifest = cls(
            source_domains=sources,
            labeled_domain=header["labeled_domain"][0] or None,
            labeled_ratio=float(header["labeled_ratio"][0]),
            target_domain=header["target_domain"][0] or None,
            records=records,
            styles=styles,
            scene=scene,
            root=header["root"][0] if "root" in header else None,
        )
        manifest.validate()
        return manifest

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"manifest not found: {path}")
        man = cls.from_text(path.read_text())
        # relative roots are relative to the manifest file
        if man.root is not None and not Path(man.root).is_absolute():
            man.root = str(path.parent / man.root)
        return man


def _parse_style(domain: str, items: list[str]) -> DomainStyle:
    kv = dict(v.split("=", 1) for v in items)
    return DomainStyle(
        domain_id=domain,
        brightness_gain=float(kv["brightness_gain"]),
        contrast_gain=float(kv["contrast_gain"]),
        channel_shift=tuple(float(v) for v in kv["channel_shift"].split(",")),
        noise_sigma=float(kv["noise_sigma"]),
        blur_radius=float(kv["blur_radius"]),
    )


# -- scene generation ---------------------------------------------------------

def _ellipse(yy, xx, cy, cx, ay, ax, theta):
    """Normalized ellipse radius (<1 inside) on the pixel-center grid."""
    c, s = math.cos(theta), math.sin(theta)
    dy, dx = yy - cy, xx - cx
    u = (c * dx + s * dy) / ax
    v = (-s * dx + c * dy) / ay
    return np.sqrt(u * u + v * v)


def _smooth_noise(rng, shape, sigma):
    n = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return n / (n.std() + 1e-12)


def _draw_region(rng, side, area, yy, xx, margin=2.0):
    aspect = rng.uniform(0.8, 1.25)
    r = math.sqrt(area / math.pi)
    ay, ax = r * aspect ** 0.5, r / aspect ** 0.5
    theta = rng.uniform(0, math.pi)
    ext = max(ay, ax) + margin
    if 2 * ext >= side:
        return None
    cy = rng.uniform(ext, side - ext)
    cx = rng.uniform(ext, side - ext)
    return cy, cx, ay, ax, theta


def generate_scene(spec: SceneSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Render one fundus-like scene; a pure function of ``(spec, seed)``.

    Returns ``(image, mask)`` with image ``(3, S, S)`` float32 and mask
    ``(num_classes, S, S)`` uint8. The union of foreground classes covers a
    fraction of the image inside ``spec.fg_fraction_range``; with
    ``spec.nested`` the class-2 support lies inside class 1.
    """
    S = spec.image_side
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:S, 0:S].astype(np.float64) + 0.5
    lo, hi = spec.fg_fraction_range
    masks = None
    dists = []
    for _ in range(200):
        frac = rng.uniform(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo))
        dists = []
        if spec.nested:
            geo = _draw_region(rng, S, frac * S * S, yy, xx)
            if geo is None:
                continue
            cy, cx, ay, ax, th = geo
            outer = _ellipse(yy, xx, cy, cx, ay, ax, th)
            k = rng.uniform(0.4, 0.65)
            oy, ox = rng.uniform(-0.15, 0.15, size=2) * (ay, ax)
            inner = _ellipse(yy, xx, cy + oy, cx + ox, k * ay, k * ax, th + rng.uniform(-0.3, 0.3))
            m1 = outer < 1
            m2 = (inner < 1) & m1
            masks = np.stack([m1, m2])
            dists = [outer, inner]
        else:
            ms = []
            for _c in range(spec.num_classes):
                geo = _draw_region(rng, S, frac * S * S / spec.num_classes, yy, xx)
                if geo is None:
                    break
                d = _ellipse(yy, xx, *geo)
                dists.append(d)
                ms.append(d < 1)
            if len(ms) != spec.num_classes:
                continue
            masks = np.stack(ms)
        fg = masks.any(axis=0).mean()
        if lo <= fg <= hi and masks.reshape(len(masks), -1).any(axis=1).all():
            break
    else:
        raise ConfigError(f"could not place foreground within {spec.fg_fraction_range} at side {S}")

    base = np.array([0.42, 0.22, 0.12])[:, None, None]
    tex = 0.05 * _smooth_noise(rng, (3, S, S), S / 16)
    vignette = 0.12 * (((yy - S / 2) ** 2 + (xx - S / 2) ** 2) / (S * S / 2))
    img = base + tex - vignette
    # vessels: a few dark sinusoidal curves
    for _ in range(rng.integers(2, 5)):
        horizontal = rng.random() < 0.5
        a, b = (yy, xx) if horizontal else (xx, yy)
        path = rng.uniform(0.2, 0.8) * S + rng.uniform(2, S / 6) * np.sin(
            b / S * rng.uniform(1.5, 4) + rng.uniform(0, 2 * np.pi))
        width = rng.uniform(0.6, 1.4)
        img = img - 0.12 * np.exp(-((a - path) / width) ** 2)[None] * np.array([1.0, 0.8, 0.4])[:, None, None]
    if spec.nested:
        outer, inner = dists
        disc = 1 / (1 + np.exp((outer - 1) * 12))
        cup = 1 / (1 + np.exp((inner - 1) * 12)) * masks[0]
        img = img + disc[None] * np.array([0.30, 0.28, 0.16])[:, None, None]
        img = img + cup[None] * np.array([0.10, 0.12, 0.10])[:, None, None]
    else:
        for d in dists:
            blob = 1 / (1 + np.exp((d - 1) * 12))
            img = img + blob[None] * np.array([0.3, 0.25, 0.15])[:, None, None]
    img = np.clip(img, 0.0, 1.0).astype(np.float32)
    return img, masks.astype(np.uint8)


def apply_domain_style(img: np.ndarray, style: DomainStyle, seed: int) -> np.ndarray:
    """Apply a domain's appearance shift; masks are never involved.

    Order: contrast about 0.5, brightness gain, per-channel shift, Gaussian
    blur, additive Gaussian noise, clip to [0, 1]. Identity-valued steps are
    skipped so the identity style returns the input unchanged.
    """
    img = np.asarray(img)
    if img.ndim != 3:
        raise InputError(f"expected (C, H, W) image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise InputError("image contains non-finite values")
    out = img.astype(np.float32, copy=True)
    if style.contrast_gain != 1.0:
        out = (out - 0.5) * style.contrast_gain + 0.5
    if style.brightness_gain != 1.0:
        out = out * style.brightness_gain
    shift = np.asarray(style.channel_shift, dtype=np.float32)
    if np.any(shift != 0):
        if len(shift) != out.shape[0]:
            raise InputError(f"style has {len(shift)} channel shifts for {out.shape[0]} channels")
        out = out + shift[:, None, None]
    if style.blur_radius > 0:
        out = ndimage.gaussian_filter(out, sigma=(0, style.blur_radius, style.blur_radius), mode="nearest")
    if style.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, style.noise_sigma, size=out.shape).astype(np.float32)
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def sample_domain_styles(domains: Sequence[str], seed: int, channels: int = 3) -> dict[str, DomainStyle]:
    """Draw one appearance style per domain.

    Each domain gets its own colour cast: the signs of the per-channel
    shifts are distinct corners of the cube (while there are corners left),
    magnitudes 0.2-0.3. Brightness is stratified so domains never coincide
    on that axis either; contrast, noise and blur are drawn independently.
    """
    rng = np.random.default_rng(seed)
    n = len(domains)
    slots = rng.permutation(n)
    corners = np.array(list(itertools.product((-1.0, 1.0), repeat=channels)))
    signs = corners[rng.permutation(len(corners))]
    styles = {}
    for k, (d, slot) in enumerate(zip(domains, slots)):
        lo = 0.7 + 0.7 * slot / n
        sign = signs[k] if k < len(signs) else rng.choice((-1.0, 1.0), size=channels)
        styles[d] = DomainStyle(
            domain_id=d,
            brightness_gain=float(rng.uniform(lo, lo + 0.7 / n)),
            contrast_gain=float(rng.uniform(0.7, 1.4)),
            channel_shift=tuple(float(v) for v in sign * rng.uniform(0.2, 0.3, size=channels)),
            noise_sigma=float(rng.uniform(0.0, 0.05)),
            blur_radius=float(rng.uniform(0.0, 1.2)),
        )
    return styles


# -- splits ---------------------------------------------------------------------

def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5 + 1e-9))


def _check_split_args(domains, labeled_domain, labeled_ratio, target_domain):
    if len(set(domains)) != len(domains):
        raise ConfigError(f"duplicate source domains in {domains}")
    if labeled_domain not in domains:
        raise ConfigError(f"labeled domain {labeled_domain!r} not among sources {list(domains)}")
    if target_domain in domains:
        raise ConfigError(f"target domain {target_domain!r} must not be a source domain")
    if not 0 < labeled_ratio <= 1:
        raise ConfigError(f"labeled_ratio must be in (0, 1], got {labeled_ratio}")


def assign_cdssdg_split(records: Iterable[Record], sources: Sequence[str], labeled_domain: str,
                        labeled_ratio: float, target_domain: str, seed: int) -> list[Record]:
    """Re-split a record pool: a random fraction of one source domain is labeled,
    every other source record is unlabeled, target-domain records are held out.
    Records from domains that are neither source nor target are dropped."""
    _check_split_args(sources, labeled_domain, labeled_ratio, target_domain)
    records = list(records)
    rng = np.random.default_rng(seed)
    candidates = [i for i, r in enumerate(records) if r.domain == labeled_domain and r.has_label]
    n_lab = round_half_up(labeled_ratio * len([r for r in records if r.domain == labeled_domain]))
    if n_lab > len(candidates):
        raise DataError(f"domain {labeled_domain!r} has only {len(candidates)} annotated images, "
                        f"{n_lab} requested")
    chosen = set(rng.permutation(candidates)[:n_lab].tolist())
    out = []
    for i, r in enumerate(records):
        if r.domain == target_domain:
            split = "target"
        elif r.domain in sources:
            split = "labeled" if i in chosen else "unlabeled"
        else:
            continue
        out.append(Record(r.ref, r.domain, split, r.has_label))
    return out


def _record_seed(seed: int, domain_index: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, domain_index, i]).generate_state(1)[0])


def build_cdssdg_split(domains: Sequence[str], per_domain_count: int, labeled_domain: str,
                       labeled_ratio: float, target_domain: str, seed: int,
                       scene: SceneSpec | None = None,
                       styles: dict[str, DomainStyle] | None = None) -> DatasetManifest:
    """Build a synthetic CD-SSDG manifest.

    Each of the K source domains and the target domain gets ``per_domain_count``
    scene seeds. ``round_half_up(labeled_ratio * per_domain_count)`` of the
    labeled domain become labeled, the rest of the sources are unlabeled.
    Per-domain styles are sampled from ``seed`` unless given.
    """
    domains = list(domains)
    _check_split_args(domains, labeled_domain, labeled_ratio, target_domain)
    if per_domain_count < 1:
        raise ConfigError("per_domain_count must be >= 1")
    scene = scene or SceneSpec()
    all_domains = domains + [target_domain]
    if styles is None:
        styles = sample_domain_styles(all_domains, seed)
    missing = [d for d in all_domains if d not in styles]
    if missing:
        raise ConfigError(f"no style given for domains {missing}")
    pool = [Record(_record_seed(seed, k, i), d, "unlabeled", True)
            for k, d in enumerate(all_domains) for i in range(per_domain_count)]
    records = assign_cdssdg_split(pool, domains, labeled_domain, labeled_ratio, target_domain, seed)
    manifest = DatasetManifest(domains, labeled_domain, labeled_ratio, target_domain, records,
                               styles={d: styles[d] for d in all_domains}, scene=scene)
    manifest.validate()
    return manifest


# -- folder datasets ----------------------------------------------------------------

def _find_mask(mask_dir: Path, stem: str) -> Path | None:
    for ext in MASK_EXTS:
        p = mask_dir / f"{stem}{ext}"
        if p.exists():
            return p
    return None


def mask_path_for(image_path) -> Path | None:
    p = Path(image_path)
    return _find_mask(p.parent.parent / "masks", p.stem)


def _image_hw(path: Path) -> tuple[int, int]:
    if path.suffix == ".npy":
        arr = np.load(path, mmap_mode="r")
        return tuple(arr.shape[-2:])
    from PIL import Image

    with Image.open(path) as im:
        w, h = im.size
    return h, w


def load_folder_dataset(root, labeled_domain: str | None = None, labeled_ratio: float = 1.0,
                        target_domain: str | None = None, seed: int = 0) -> DatasetManifest:
    """Index ``<root>/<domain>/{images,masks}/<name>.<ext>``.

    Images pair with masks by file stem; images without a mask become
    records with ``has_label=False``. Without ``labeled_domain`` and
    ``target_domain`` every record lands in the unlabeled pool; with them the
    pool is split as in `assign_cdssdg_split`.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root not found: {root}")
    domains = sorted(p.name for p in root.iterdir() if (p / "images").is_dir())
    if not domains:
        raise DataError(f"no <domain>/images directories under {root}")
    pool = []
    for d in domains:
        for img_path in sorted((root / d / "images").iterdir()):
            if img_path.suffix.lower() not in IMAGE_EXTS:
                continue
            mask_path = _find_mask(root / d / "masks", img_path.stem)
            if mask_path is not None:
                ih, mh = _image_hw(img_path), _image_hw(mask_path)
                if ih != mh:
                    raise DataError(f"mask {mask_path} has size {mh}, image {img_path} has size {ih}")
            pool.append(Record(str(img_path), d, "unlabeled", mask_path is not None))
    if labeled_domain is None and target_domain is None:
        return DatasetManifest(domains, None, labeled_ratio, None, pool, root=str(root))
    sources = [d for d in domains if d != target_domain]
    records = assign_cdssdg_split(pool, sources, labeled_domain, labeled_ratio, target_domain, seed)
    manifest = DatasetManifest(sources, labeled_domain, labeled_ratio, target_domain, records,
                               root=str(root))
    manifest.validate()
    return manifest


def read_image(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path).astype(np.float32)
        return arr if arr.ndim == 3 else arr[None]
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def read_mask(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        arr = np.load(path)
        arr = arr if arr.ndim == 3 else arr[None]
        return (arr > 0).astype(np.uint8)
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr > 127).astype(np.uint8)[None]


def write_image(path, img: np.ndarray) -> None:
    from PIL import Image

    arr = np.clip(np.round(np.asarray(img).transpose(1, 2, 0) * 255), 0, 255).astype(np.uint8)
    Image.fromarray(arr.squeeze(-1) if arr.shape[-1] == 1 else arr).save(path)


def _resize(arr: np.ndarray, size: int, order: int) -> np.ndarray:
    h, w = arr.shape[-2:]
    if (h, w) == (size, size):
        return arr
    return ndimage.zoom(arr, (1, size / h, size / w), order=order, mode="nearest", grid_mode=True)


def load_sample(manifest: DatasetManifest, record: Record,
                size: int | None = None) -> tuple[np.ndarray, np.ndarray | None]:
    """Materialize one record as ``(image, mask)``; mask is None if unlabeled on disk."""
    if manifest.synthetic:
        img, mask = generate_scene(manifest.scene, int(record.ref))
        img = apply_domain_style(img, manifest.styles[record.domain], int(record.ref))
    else:
        path = Path(record.ref)
        if not path.is_absolute() and manifest.root is not None:
            path = Path(manifest.root) / path
        img = read_image(path)
        mp = mask_path_for(path) if record.has_label else None
        mask = read_mask(mp) if mp is not None else None
        if mask is not None and mask.shape[-2:] != img.shape[-2:]:
            raise DataError(f"mask {mp} has size {mask.shape[-2:]}, image {path} has {img.shape[-2:]}")
    if size is not None:
        img = np.clip(_resize(img, size, order=1), 0, 1).astype(np.float32)
        if mask is not None:
            mask = _resize(mask, size, order=0).astype(np.uint8)
    return img, mask


def materialize(manifest: DatasetManifest, out_dir) -> DatasetManifest:
    """Write a synthetic manifest to disk in the folder layout.

    Returns the equivalent folder manifest. Record paths are relative to
    ``out_dir`` (its ``root``); masks are stored losslessly as ``.npy``.
    """
    if not manifest.synthetic:
        raise InputError("materialize expects a synthetic manifest")
    out_dir = Path(out_dir)
    records = []
    for r in manifest.records:
        img, mask = load_sample(manifest, r)
        img_dir = out_dir / r.domain / "images"
        mask_dir = out_dir / r.domain / "masks"
        os.makedirs(img_dir, exist_ok=True)
        os.makedirs(mask_dir, exist_ok=True)
        name = f"{r.domain}_{r.ref}"
        write_image(img_dir / f"{name}.png", img)
        np.save(mask_dir / f"{name}.npy", mask)
        records.append(Record(f"{r.domain}/images/{name}.png", r.domain, r.split, r.has_label))
    return DatasetManifest(list(manifest.source_domains), manifest.labeled_domain,
                           manifest.labeled_ratio, manifest.target_domain, records,
                           styles=dict(manifest.styles), root=str(out_dir))


def style_fields() -> list[str]:
    return [f.name for f in fields(DomainStyle) if f.name != "domain_id"]
