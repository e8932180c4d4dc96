import numpy as np
import pytest

from porogen.grid import porosity
from porogen.morph import lineal_path
from porogen.synthdata import (
    DatasetManifest,
    MaskSpec,
    MediumSpec,
    build_dataset,
    generate_mask,
    generate_medium,
    load_dataset,
    pair_paths,
    split_indices,
    threshold_by_rank,
)


@pytest.mark.parametrize("kind", ["blob", "disks", "anisotropic-blob"])
def test_medium_porosity_is_exact(kind):
    img = generate_medium(MediumSpec(kind, 0.3, 3.0, seed=4), 64)
    assert abs(porosity(img) - 0.3) <= 1 / 64 ** 2
    assert abs(porosity(img) - 0.3) <= 0.001


@pytest.mark.parametrize("kind", ["blob", "disks", "anisotropic-blob"])
def test_medium_is_deterministic(kind):
    a = generate_medium(MediumSpec(kind, 0.2, 2.0, seed=11), 32)
    assert a == generate_medium(MediumSpec(kind, 0.2, 2.0, seed=11), 32)
    assert a != generate_medium(MediumSpec(kind, 0.2, 2.0, seed=12), 32)


def test_anisotropic_elongates_along_diagonal():
    se, x = [], []
    for seed in range(50):
        img = generate_medium(MediumSpec("anisotropic-blob", 0.3, 2.0, seed), 64)
        se.append(lineal_path(img, "pore", "se", 4).values[4])
        x.append(lineal_path(img, "pore", "x", 4).values[4])
    assert np.mean(se) > np.mean(x)


def test_blob_is_roughly_isotropic():
    gap = []
    for seed in range(20):
        img = generate_medium(MediumSpec("blob", 0.3, 3.0, seed), 64)
        gap.append(lineal_path(img, "pore", "x", 4).values[4]
                   - lineal_path(img, "pore", "y", 4).values[4])
    assert abs(np.mean(gap)) < 0.02


@pytest.mark.parametrize("kw", [{"kind": "foam"}, {"phi": 0.0}, {"phi": 1.0},
                                {"corr_length": 0.5}])
def test_medium_spec_validation(kw):
    with pytest.raises(ValueError):
        MediumSpec(**kw)


def test_threshold_by_rank():
    v = np.array([[0.1, 0.9], [0.5, 0.5]])
    np.testing.assert_array_equal(threshold_by_rank(v, 0.5), [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        threshold_by_rank(v, 0.05)


@pytest.mark.parametrize("spec, expected", [
    (MaskSpec("corner-square", 26), 676),
    (MaskSpec("k-random-squares", 13, count=4), 676),
    (MaskSpec("horizontal-strip", 20), 2560),
    (MaskSpec("vertical-strip", 20), 2560),
])
def test_mask_sizes(spec, expected):
    m = generate_mask(spec, 128, seed=3)
    assert m.informed_count == expected
    assert m == generate_mask(spec, 128, seed=3)


def test_mask_placement():
    corner = generate_mask(MaskSpec("corner-square", 26), 128).data
    assert corner[:26, :26].all() and corner.sum() == 676
    strip = generate_mask(MaskSpec("horizontal-strip", 20), 128).data
    assert strip[:20].all()


def test_random_squares_cannot_fit():
    with pytest.raises(ValueError):
        generate_mask(MaskSpec("k-random-squares", 10, count=5), 16, seed=0)
    with pytest.raises(ValueError):
        generate_mask(MaskSpec("corner-square", 20), 16)


def test_split_sizes():
    train, test = split_indices(600, 1)
    assert (len(train), len(test)) == (420, 180)
    assert sorted(train + test) == list(range(600))
    assert split_indices(600, 1) == (train, test)
    assert split_indices(600, 2) != (train, test)


def test_build_dataset(tmp_path):
    man = build_dataset(12, MediumSpec("blob", 0.3, 2.0), MaskSpec("corner-square", 5), 9,
                        tmp_path / "a", size=16)
    assert (len(man.train), len(man.test)) == (8, 4)
    ds = load_dataset(tmp_path / "a")
    assert ds.manifest == man
    for c, t in zip(ds.conds, ds.targets):
        m = c.mask.data
        np.testing.assert_array_equal(c.values.data[m], t.data[m])
        assert c.mask.informed_count == 25
    build_dataset(12, MediumSpec("blob", 0.3, 2.0), MaskSpec("corner-square", 5), 9,
                  tmp_path / "b", size=16)
    for name in ("manifest.json",):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for i in range(12):
        for pa, pb in zip(pair_paths(tmp_path / "a", i).values(),
                          pair_paths(tmp_path / "b", i).values()):
            assert pa.read_bytes() == pb.read_bytes()


def test_random_masks_vary_per_sample(tmp_path):
    build_dataset(10, MediumSpec("disks", 0.3, 2.0),
                  MaskSpec("k-random-squares", 3, count=2, random_placement=True), 1,
                  tmp_path, size=16)
    masks = {c.mask for c in load_dataset(tmp_path).conds}
    assert len(masks) > 1


def test_dataset_needs_ten(tmp_path):
    with pytest.raises(ValueError):
        build_dataset(9, MediumSpec(), MaskSpec(), 0, tmp_path, size=32)


def test_manifest_json_round_trip():
    m = DatasetManifest(10, 16, [0, 1], [2], MediumSpec(), MaskSpec(), 5)
    assert DatasetManifest.from_json(m.to_json()) == m
