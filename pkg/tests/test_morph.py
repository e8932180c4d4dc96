import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from porogen import oracle
from porogen.grid import BinaryImage, porosity
from porogen.morph import (
    CurveStatistic,
    PatternDistribution,
    average_curves,
    curves_from_csv,
    curves_to_csv,
    descriptor_suite,
    label_clusters,
    lineal_path,
    pattern_distance,
    pattern_distribution,
    two_point_cluster,
    two_point_correlation,
)
from conftest import random_image

binary_images = arrays(np.uint8, st.tuples(st.integers(3, 10), st.integers(3, 10)),
                       elements=st.integers(0, 1)).map(BinaryImage)


def test_stripes_s2(stripes):
    x = two_point_correlation(stripes, "pore", "x", 2).values
    y = two_point_correlation(stripes, "pore", "y", 2).values
    xy = two_point_correlation(stripes, "pore", "xy", 2).values
    assert x[1] == 0 and x[2] == 0.5
    assert y[1] == 0.5
    assert xy[1] == 0.25
    assert list(x) == oracle.s2(stripes, "pore", "x", 2)


def test_s2_zero_lag_is_porosity(rng):
    img = random_image(rng, (12, 9))
    for d in ("x", "y", "xy", "se"):
        assert two_point_correlation(img, "pore", d, 5).values[0] == porosity(img)
        assert lineal_path(img, "pore", d, 5).values[0] == porosity(img)


def test_solid_phase_complements(rng):
    img = random_image(rng, (10, 10))
    assert two_point_correlation(img, "solid", "x", 3).values[0] == 1 - porosity(img)


def test_r_max_out_of_range(rng):
    img = random_image(rng, (8, 12))
    two_point_correlation(img, "pore", "x", 11)
    with pytest.raises(ValueError):
        two_point_correlation(img, "pore", "y", 8)
    with pytest.raises(ValueError):
        lineal_path(img, "pore", "se", 8)
    with pytest.raises(ValueError):
        two_point_cluster(img, "pore", "x", -1)
    with pytest.raises(ValueError):
        two_point_correlation(img, "pore", "diag", 2)


def test_lineal_examples(stripes):
    full = BinaryImage(np.ones((6, 6), np.uint8))
    assert np.all(lineal_path(full, "pore", "se", 5).values == 1.0)
    assert lineal_path(stripes, "pore", "x", 3).values[1] == 0


def test_lineal_monotone_and_matches_oracle(rng):
    for _ in range(100):
        img = random_image(rng, (32, 32), p=rng.uniform(0.3, 0.7))
        for d in ("x", "y", "se"):
            v = lineal_path(img, "pore", d, 8).values
            assert np.all(np.diff(v) <= 0)
            np.testing.assert_allclose(v, oracle.lineal(img, "pore", d, 8), rtol=0, atol=1e-12)


def test_lineal_run_counts_never_grow(rng):
    # the normalized curve can tick up on tiny images because the number of
    # in-image placements shrinks with r; the raw run counts cannot
    img = random_image(rng, (8, 8), p=0.8)
    v = lineal_path(img, "pore", "x", 7).values
    placements = 8 * (8 - np.arange(8))
    assert np.all(np.diff(np.round(v * placements)) <= 0)


def test_label_clusters_examples():
    one = np.zeros((5, 5), np.uint8)
    one[2, 2] = 1
    lab = label_clusters(BinaryImage(one))
    assert lab.max() == 1 and (lab == 1).sum() == 1

    diag = np.zeros((3, 3), np.uint8)
    diag[0, 0] = diag[1, 1] = 1
    assert label_clusters(BinaryImage(diag)).max() == 2
    assert label_clusters(BinaryImage(diag), connectivity=8).max() == 1


def _same_partition(a, b):
    pairs = set(zip(a.ravel().tolist(), b.ravel().tolist()))
    return len(pairs) == len({p[0] for p in pairs}) == len({p[1] for p in pairs})


def test_label_clusters_match_flood_fill(rng):
    img = random_image(rng, (32, 32))
    for phase in ("pore", "solid"):
        for conn in (4, 8):
            lab = label_clusters(img, phase, conn)
            ref = np.array(oracle.flood_fill_labels(img, phase, conn))
            assert _same_partition(lab, ref)
            assert set(np.unique(lab)) == set(range(lab.max() + 1))


def test_c2_isolated_pixels():
    a = np.zeros((5, 5), np.uint8)
    a[2, 1] = a[2, 3] = 1
    img = BinaryImage(a)
    assert two_point_correlation(img, "pore", "x", 2).values[2] > 0
    assert two_point_cluster(img, "pore", "x", 2).values[2] == 0


def test_c2_equals_s2_for_single_cluster():
    a = np.zeros((8, 8), np.uint8)
    a[1:7, 2:5] = 1
    img = BinaryImage(a)
    for d in ("x", "y", "xy", "se"):
        assert two_point_cluster(img, "pore", d, 5) .values.tolist() == \
            two_point_correlation(img, "pore", d, 5).values.tolist()


@pytest.mark.parametrize("direction", ["x", "y", "xy", "se"])
def test_descriptors_match_oracles(rng, direction):
    for _ in range(10):
        img = random_image(rng, (16, 16), p=rng.uniform(0.2, 0.8))
        for phase in ("pore", "solid"):
            suite = descriptor_suite(img, phase, direction, 8)
            np.testing.assert_allclose(suite["S2"].values,
                                       oracle.s2(img, phase, direction, 8), rtol=0, atol=1e-12)
            np.testing.assert_allclose(suite["L"].values,
                                       oracle.lineal(img, phase, direction, 8), rtol=0, atol=1e-12)
            np.testing.assert_allclose(suite["C2"].values,
                                       oracle.c2(img, phase, direction, 8), rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(binary_images, st.sampled_from(["x", "y", "xy", "se"]))
def test_descriptor_ordering(img, direction):
    r = min(img.shape) - 1
    s = descriptor_suite(img, "pore", direction, r)
    s2, ll, c2 = s["S2"].values, s["L"].values, s["C2"].values
    assert np.all((0 <= c2) & (c2 <= s2 + 1e-15) & (s2 <= 1))
    assert np.all((0 <= ll) & (ll <= s2 + 1e-15))
    assert c2[0] == s2[0] == ll[0] == porosity(img)


def test_pattern_examples(checkerboard):
    solid = pattern_distribution(BinaryImage(np.zeros((5, 5), np.uint8)), 2)
    assert solid.probabilities == {0: 1.0}
    cb = pattern_distribution(checkerboard, 2)
    # 9 windows alternate between 0110 and 1001, starting and ending on 0110
    assert cb.probabilities == {6: 5 / 9, 9: 4 / 9}
    assert cb.probabilities == oracle.pattern_histogram(checkerboard, 2)
    with pytest.raises(ValueError):
        pattern_distribution(checkerboard, 5)


def test_pattern_bit_order():
    # only the top-left pixel of the single 3x3 window is pore
    a = np.zeros((3, 3), np.uint8)
    a[0, 0] = 1
    assert pattern_distribution(BinaryImage(a), 3).probabilities == {256: 1.0}
    a = np.zeros((3, 3), np.uint8)
    a[2, 2] = 1
    assert pattern_distribution(BinaryImage(a), 3).probabilities == {1: 1.0}


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_pattern_matches_oracle(rng, n):
    for _ in range(10):
        img = random_image(rng, (16, 16))
        ref = oracle.pattern_histogram(img, n)
        got = pattern_distribution(img, n).probabilities
        assert set(got) == set(ref)
        for c in ref:
            assert got[c] == pytest.approx(ref[c], abs=1e-12)
        assert sum(got.values()) == pytest.approx(1.0, abs=1e-12)


def test_pattern_distance_examples(rng):
    a = PatternDistribution(2, [0], [1.0])
    b = PatternDistribution(2, [15], [1.0])
    assert pattern_distance(a, b) == 2.0
    assert pattern_distance(a, a) == 0.0
    x = pattern_distribution(random_image(rng, (9, 9)), 3)
    y = pattern_distribution(random_image(rng, (9, 9)), 3)
    assert pattern_distance(x, y) == pattern_distance(y, x)
    assert pattern_distance(x, y) == pytest.approx(np.sum((x.dense() - y.dense()) ** 2))
    with pytest.raises(ValueError):
        pattern_distance(a, x)


def test_pattern_dense_round_trip(rng):
    p = pattern_distribution(random_image(rng, (10, 10)), 2)
    q = PatternDistribution.from_dense(2, p.dense())
    assert q.probabilities == p.probabilities


def test_average_curves(rng):
    c0 = CurveStatistic("S2", "pore", "x", [0.0, 0.0])
    c1 = CurveStatistic("S2", "pore", "x", [1.0, 1.0])
    assert average_curves([c0, c1]).values.tolist() == [0.5, 0.5]
    assert average_curves([c1, c1, c1]) == c1
    curves = [two_point_correlation(random_image(rng, (12, 12)), "pore", "xy", 6)
              for _ in range(20)]
    ref = sum(c.values for c in curves) / 20
    np.testing.assert_allclose(average_curves(curves).values, ref, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        average_curves([c0, CurveStatistic("L", "pore", "x", [0.0, 0.0])])
    with pytest.raises(ValueError):
        average_curves([])


def test_curve_csv_round_trip(rng):
    img = random_image(rng, (12, 12))
    curves = list(descriptor_suite(img, "pore", "xy", 5).values())
    text = curves_to_csv(curves)
    assert text.splitlines()[0] == "kind,phase,direction,r,value"
    assert curves_from_csv(text) == curves


def test_curve_statistic_validation():
    with pytest.raises(ValueError):
        CurveStatistic("S3", "pore", "x", [0.1])
    with pytest.raises(ValueError):
        CurveStatistic("S2", "void", "x", [0.1])
