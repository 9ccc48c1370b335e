from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dacseg.datagen import (DatasetManifest, DomainStyle, Record, SceneSpec, apply_domain_style,
                            build_cdssdg_split, generate_scene, load_folder_dataset, load_sample,
                            materialize, round_half_up, sample_domain_styles, write_image)
from dacseg.errors import ConfigError, DataError

SPEC = SceneSpec(image_side=64, num_classes=2, nested=True, fg_fraction_range=(0.08, 0.30))


def test_scene_is_deterministic():
    a = generate_scene(SPEC, 123)
    b = generate_scene(SPEC, 123)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = generate_scene(SPEC, 124)
    assert not np.array_equal(a[0], c[0])


def test_scene_contract():
    img, mask = generate_scene(SPEC, 7)
    assert img.shape == (3, 64, 64) and img.dtype == np.float32
    assert mask.shape == (2, 64, 64) and set(np.unique(mask)) <= {0, 1}
    assert img.min() >= 0 and img.max() <= 1


def test_nested_support():
    for seed in range(50):
        _, mask = generate_scene(SPEC, seed)
        assert np.all(mask[1] <= mask[0])
        assert mask[1].sum() > 0


def test_foreground_fraction_over_1000_seeds():
    lo, hi = SPEC.fg_fraction_range
    fracs = np.array([generate_scene(SPEC, s)[1].any(axis=0).mean() for s in range(1000)])
    assert np.all((fracs >= lo) & (fracs <= hi))


def test_non_nested_scene():
    spec = SceneSpec(image_side=48, num_classes=1, nested=False, fg_fraction_range=(0.05, 0.2))
    img, mask = generate_scene(spec, 3)
    assert mask.shape == (1, 48, 48)
    assert 0.05 <= mask.mean() <= 0.2


@pytest.mark.parametrize("kw", [
    dict(fg_fraction_range=(0.3, 0.3)),
    dict(fg_fraction_range=(0.4, 0.2)),
    dict(nested=True, num_classes=1),
    dict(image_side=16),
])
def test_invalid_scene_spec(kw):
    with pytest.raises(ConfigError):
        SceneSpec(**kw)


def test_identity_style_returns_input():
    img, _ = generate_scene(SPEC, 1)
    out = apply_domain_style(img, DomainStyle("I"), seed=0)
    assert np.array_equal(out, img)


def test_brightness_saturates():
    img = np.full((3, 32, 32), 0.6, dtype=np.float32)
    out = apply_domain_style(img, DomainStyle("B", brightness_gain=2.0), seed=0)
    assert np.all(out == 1.0)


def test_distinct_styles_shift_mean():
    img, _ = generate_scene(SPEC, 5)
    styles = sample_domain_styles(["A", "B", "C", "D"], seed=0)
    means = [apply_domain_style(img, s, 5).mean() for s in styles.values()]
    for i in range(len(means)):
        for j in range(i + 1, len(means)):
            assert abs(means[i] - means[j]) > 0.01


def test_style_leaves_masks_alone():
    img, mask = generate_scene(SPEC, 9)
    before = mask.copy()
    apply_domain_style(img, DomainStyle("X", 1.3, 0.7, (0.1, 0, -0.1), 0.05, 1.0), 9)
    assert np.array_equal(mask, before)


def test_style_output_range():
    img, _ = generate_scene(SPEC, 9)
    out = apply_domain_style(img, DomainStyle("X", 1.6, 1.5, (0.3, -0.3, 0.2), 0.2, 0.5), 9)
    assert out.min() >= 0 and out.max() <= 1


def test_style_validation():
    with pytest.raises(ConfigError):
        DomainStyle("X", brightness_gain=0)
    with pytest.raises(ConfigError):
        DomainStyle("X", channel_shift=(0.5, 0, 0))


def test_split_counts():
    m = build_cdssdg_split(["A", "B", "C"], 50, "A", 0.2, "D", seed=0)
    assert len(m.labeled) == 10
    assert len(m.unlabeled) == 140
    assert len(m.target) == 50
    assert {r.domain for r in m.labeled} == {"A"}


def test_split_full_ratio():
    m = build_cdssdg_split(["A", "B", "C"], 50, "A", 1.0, "D", seed=0)
    assert len(m.labeled) == 50
    assert sum(r.domain == "A" for r in m.unlabeled) == 0
    assert len(m.unlabeled) == 100


def test_round_half_up():
    assert round_half_up(2.5) == 3
    assert round_half_up(0.2 * 50) == 10
    assert round_half_up(0.25 * 10) == 3


@pytest.mark.parametrize("kw", [
    dict(target_domain="A"),
    dict(labeled_ratio=0.0),
    dict(labeled_ratio=1.5),
    dict(labeled_domain="Z"),
])
def test_split_errors(kw):
    args = dict(domains=["A", "B", "C"], per_domain_count=10, labeled_domain="A",
                labeled_ratio=0.2, target_domain="D", seed=0)
    args.update(kw)
    with pytest.raises(ConfigError):
        build_cdssdg_split(**args)


@settings(max_examples=100, deadline=None)
@given(k=st.integers(1, 4), n=st.integers(1, 30), ratio=st.floats(0.01, 1.0), seed=st.integers(0, 2 ** 31))
def test_split_invariants_property(k, n, ratio, seed):
    domains = [f"S{i}" for i in range(k)]
    m = build_cdssdg_split(domains, n, "S0", ratio, "T", seed)
    lab = {(r.domain, r.ref) for r in m.labeled}
    unl = {(r.domain, r.ref) for r in m.unlabeled}
    assert not lab & unl
    assert all(r.domain != "T" for r in m.labeled + m.unlabeled)
    assert all(r.domain == "S0" for r in m.labeled)
    assert round_half_up(ratio * n) + len(m.unlabeled) == k * n
    assert len(m.labeled) == round_half_up(ratio * n)


def test_manifest_roundtrip_and_header(tmp_path):
    m = build_cdssdg_split(["A", "B", "C"], 6, "B", 0.5, "D", seed=3)
    p = tmp_path / "manifest.tsv"
    m.save(p)
    text = p.read_text()
    for d in "ABCD":
        assert f"# style\t{d}\t" in text
    assert "# K\t3" in text
    back = DatasetManifest.load(p)
    assert back.to_text() == text
    assert back.styles == m.styles
    assert [r.ref for r in back.records] == [r.ref for r in m.records]
    # loading a record from the reloaded manifest regenerates the same pixels
    a = load_sample(m, m.records[0])
    b = load_sample(back, back.records[0])
    assert np.array_equal(a[0], b[0])


def test_manifest_rejects_leak():
    m = build_cdssdg_split(["A", "B"], 4, "A", 0.5, "C", seed=0)
    m.records.append(Record(999, "C", "unlabeled", True))
    with pytest.raises(DataError):
        m.validate()


def _write_folder(root, domains=("A", "B", "C"), n=5, size=40):
    rng = np.random.default_rng(0)
    for d in domains:
        (root / d / "images").mkdir(parents=True)
        (root / d / "masks").mkdir(parents=True)
        for i in range(n):
            write_image(root / d / "images" / f"img{i}.png", rng.random((3, size, size)))
            np.save(root / d / "masks" / f"img{i}.npy", (rng.random((1, size, size)) > 0.5).astype(np.uint8))


def test_folder_matched_pairs(tmp_path):
    _write_folder(tmp_path)
    m = load_folder_dataset(tmp_path)
    assert len(m.records) == 15
    assert all(r.has_label for r in m.records)
    assert m.source_domains == ["A", "B", "C"]


def test_folder_unmatched_image(tmp_path):
    _write_folder(tmp_path)
    write_image(tmp_path / "A" / "images" / "extra.png", np.zeros((3, 40, 40)))
    m = load_folder_dataset(tmp_path)
    extra = [r for r in m.records if r.ref.endswith("extra.png")]
    assert len(extra) == 1 and not extra[0].has_label


def test_folder_bad_mask_names_file(tmp_path):
    _write_folder(tmp_path)
    bad = tmp_path / "B" / "masks" / "img2.npy"
    np.save(bad, np.zeros((1, 10, 12), dtype=np.uint8))
    with pytest.raises(DataError, match="img2.npy"):
        load_folder_dataset(tmp_path)


def test_folder_missing_root(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_folder_dataset(tmp_path / "nope")


def test_folder_split_and_load(tmp_path):
    _write_folder(tmp_path, domains=("A", "B", "C", "D"), n=5)
    m = load_folder_dataset(tmp_path, labeled_domain="A", labeled_ratio=0.4, target_domain="D", seed=1)
    assert len(m.labeled) == 2 and len(m.target) == 5 and len(m.unlabeled) == 13
    img, mask = load_sample(m, m.labeled[0], size=32)
    assert img.shape == (3, 32, 32) and mask.shape == (1, 32, 32)


def test_materialize_roundtrip(tmp_path):
    m = build_cdssdg_split(["A", "B"], 3, "A", 0.34, "C", seed=2, scene=SceneSpec(image_side=32))
    fm = materialize(m, tmp_path)
    again = load_folder_dataset(tmp_path, labeled_domain="A", labeled_ratio=0.34, target_domain="C", seed=2)
    assert len(again.records) == len(fm.records) == 9
    img, mask = load_sample(fm, fm.records[0])
    ref_img, ref_mask = load_sample(m, m.records[0])
    assert np.array_equal(mask, ref_mask)
    assert np.abs(img - ref_img).max() <= 0.5 / 255 + 1e-6


def test_materialized_manifest_is_relocatable(tmp_path, monkeypatch):
    m = build_cdssdg_split(["A"], 2, "A", 0.5, "B", seed=0, scene=SceneSpec(image_side=32))
    fm = materialize(m, tmp_path / "bench")
    assert not Path(fm.records[0].ref).is_absolute()
    fm.save(tmp_path / "bench" / "manifest.tsv")
    monkeypatch.chdir(tmp_path)
    back = DatasetManifest.load(tmp_path / "bench" / "manifest.tsv")
    assert back.styles == fm.styles
    img, mask = load_sample(back, back.records[0])
    assert img.shape == (3, 32, 32) and mask.shape == (2, 32, 32)
