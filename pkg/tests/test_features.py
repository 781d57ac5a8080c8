"""Feature extraction: values against independent oracles, plus the
geometric and algebraic invariants of the four feature families."""

import numpy as np
import pytest

from slidescreen.features import (
    MCC_RADII,
    FeatureVector,
    connected_components,
    extract_features,
    least_squares_regression_line,
    malignant_probability_histogram,
    malignant_tissue_ratio,
    mcc_profile,
    read_features_csv,
    write_features_csv,
)
from slidescreen.ingest import MALIGNANT, NORMAL, PatchPrediction, SlideRecord

from oracles import as_partition, grid_refine_line, line_sse, naive_components


def slide(probs, coords=None, label=MALIGNANT, slide_id="s"):
    if coords is None:
        coords = [(100 * i, 0) for i in range(len(probs))]
    patches = tuple(PatchPrediction(x, y, p) for (x, y), p in zip(coords, probs))
    return SlideRecord(slide_id, label, patches)


class TestMalignantTissueRatio:
    def test_all_malignant(self):
        assert malignant_tissue_ratio(slide([0.9] * 100)) == 1.0

    def test_none_malignant(self):
        assert malignant_tissue_ratio(slide([0.1] * 100)) == 0.0

    def test_mixed_counts(self):
        assert malignant_tissue_ratio(slide([0.9, 0.6, 0.4, 0.2])) == 0.5

    def test_threshold_is_inclusive(self):
        assert malignant_tissue_ratio(slide([0.5])) == 1.0

    def test_empty_slide(self):
        assert malignant_tissue_ratio(slide([])) == 0.0


class TestHistogram:
    def test_prob_one_lands_in_last_bin(self):
        h = malignant_probability_histogram(slide([1.0] * 10))
        assert h[9] == 1.0
        assert h[:9].sum() == 0.0

    def test_hand_binned_example(self):
        h = malignant_probability_histogram(slide([0.50, 0.52, 0.60, 0.40]))
        expected = np.zeros(10)
        expected[0] = 0.5
        expected[2] = 0.25
        np.testing.assert_array_equal(h, expected)

    def test_empty_slide(self):
        np.testing.assert_array_equal(malignant_probability_histogram(slide([])),
                                      np.zeros(10))

    def test_decimal_boundaries_bin_exactly(self):
        # every multiple of 0.05 must open its own bin, despite float parse
        for k in range(10):
            p = (50 + 5 * k) / 100
            h = malignant_probability_histogram(slide([p]))
            assert h[k] == 1.0, (p, k)

    def test_mass_equals_mtr(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            probs = rng.random(rng.integers(1, 60))
            s = slide(list(probs))
            total = malignant_probability_histogram(s).sum()
            assert total == pytest.approx(malignant_tissue_ratio(s), abs=1e-12)


class TestRegressionLine:
    def test_flat_histogram(self):
        line = least_squares_regression_line([0.3] * 10)
        assert line.m == pytest.approx(0.0, abs=1e-12)
        assert line.b == pytest.approx(0.3, abs=1e-12)

    def test_exact_linear_data(self):
        line = least_squares_regression_line([0.01 * i for i in range(10)])
        assert line.m == pytest.approx(0.01, abs=1e-12)
        assert line.b == pytest.approx(0.0, abs=1e-12)

    def test_frozen_fixture_matches_grid_oracle(self):
        # expected values computed once with oracles.grid_refine_line
        bins = [0.4, 0.1, 0, 0, 0, 0, 0, 0, 0, 0.02]
        line = least_squares_regression_line(bins)
        assert line.m == pytest.approx(-0.024969696969696968, abs=1e-12)
        assert line.b == pytest.approx(0.16436363636363638, abs=1e-12)
        # grid search resolves (m, b) only to ~1e-8: below that, SSE
        # differences fall under float64 resolution
        om, ob = grid_refine_line(bins)
        assert line.m == pytest.approx(om, abs=1e-7)
        assert line.b == pytest.approx(ob, abs=1e-7)

    def test_perturbation_never_improves_sse(self):
        rng = np.random.default_rng(99)
        eps = 1e-3
        for _ in range(100):
            bins = rng.random(10)
            m, b = least_squares_regression_line(bins)
            base = line_sse(bins, m, b)
            for dm, db in ((eps, 0), (-eps, 0), (0, eps), (0, -eps)):
                assert line_sse(bins, m + dm, b + db) >= base

    def test_wrong_bin_count_rejected(self):
        with pytest.raises(ValueError):
            least_squares_regression_line([0.1] * 9)


class TestConnectedComponents:
    def test_single_point(self):
        assert connected_components([(3.0, 4.0)], 142) == [[(3.0, 4.0)]]

    def test_diagonal_within_radius(self):
        assert len(connected_components([(0, 0), (100, 100)], 142)) == 1

    def test_diagonal_beyond_radius(self):
        assert len(connected_components([(0, 0), (100, 100)], 141)) == 2

    def test_empty_input(self):
        assert connected_components([], 142) == []

    def test_chain_linking(self):
        # a-b and b-c are close, a-c is not: still one component
        pts = [(0, 0), (140, 0), (280, 0)]
        assert len(connected_components(pts, 142)) == 1

    def test_partition_property(self):
        rng = np.random.default_rng(3)
        pts = [tuple(p) for p in rng.uniform(0, 1500, size=(120, 2))]
        comps = connected_components(pts, 283)
        flat = [p for c in comps for p in c]
        assert sorted(flat) == sorted(pts)

    def test_matches_naive_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(60):
            n = int(rng.integers(1, 120))
            pts = [tuple(p) for p in rng.uniform(0, 2000, size=(n, 2))]
            for d in MCC_RADII:
                assert as_partition(connected_components(pts, d)) == \
                    as_partition(naive_components(pts, d))

    def test_monotone_in_radius(self):
        rng = np.random.default_rng(23)
        for _ in range(20):
            pts = [tuple(p) for p in rng.uniform(0, 2000, size=(80, 2))]
            counts = [len(connected_components(pts, d)) for d in MCC_RADII]
            assert counts == sorted(counts, reverse=True)

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(ValueError):
            connected_components([(0, 0)], 0)


class TestMccProfile:
    def test_single_malignant_patch(self):
        np.testing.assert_array_equal(mcc_profile(slide([0.9])), np.ones(5))

    def test_two_patches_500px_apart(self):
        s = slide([0.9, 0.9], coords=[(0, 0), (500, 0)])
        np.testing.assert_array_equal(mcc_profile(s),
                                      [1.0, 1.0, 1.0, 0.5, 0.5])

    def test_no_malignant_patches(self):
        np.testing.assert_array_equal(mcc_profile(slide([0.2, 0.3])), np.zeros(5))

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        coords = [(int(x), int(y)) for x, y in rng.integers(0, 3000, size=(40, 2))]
        probs = list(rng.uniform(0.5, 1.0, size=40))
        base = mcc_profile(slide(probs, coords))
        shifted = [(x + 7777, y + 123) for x, y in coords]
        np.testing.assert_array_equal(base, mcc_profile(slide(probs, shifted)))


class TestExtractFeatures:
    def test_empty_slide_is_all_zero(self):
        fv = extract_features(slide([]))
        np.testing.assert_array_equal(fv.flatten(), np.zeros(18))

    def test_all_malignant_uniform_slide(self):
        # 3x3 grid of patches, all prob 0.97: mtr 1, all mass in bin 9,
        # one cluster at every radius
        coords = [(100 * c, 100 * r) for r in range(3) for c in range(3)]
        fv = extract_features(slide([0.97] * 9, coords))
        assert fv.mtr == 1.0
        assert fv.mph[9] == 1.0
        np.testing.assert_array_equal(fv.mcc, np.full(5, 1 / 9))
        line = least_squares_regression_line(fv.mph)
        assert fv.lsrl == line

    def test_composition_matches_parts(self):
        rng = np.random.default_rng(12)
        coords = [(int(x) * 100, int(y) * 100)
                  for x, y in rng.integers(0, 15, size=(60, 2))]
        probs = list(rng.random(60))
        s = slide(probs, coords)
        fv = extract_features(s)
        assert fv.mtr == malignant_tissue_ratio(s)
        np.testing.assert_array_equal(fv.mph, malignant_probability_histogram(s))
        assert fv.lsrl == least_squares_regression_line(fv.mph)
        np.testing.assert_array_equal(fv.mcc, mcc_profile(s))

    def test_flatten_order_and_width(self):
        fv = extract_features(slide([0.9, 0.1]))
        flat = fv.flatten()
        assert flat.shape == (18,)
        assert flat[0] == fv.mtr
        np.testing.assert_array_equal(flat[1:11], fv.mph)
        assert (flat[11], flat[12]) == fv.lsrl
        np.testing.assert_array_equal(flat[13:], fv.mcc)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(44)
        coords = [(int(x), int(y)) for x, y in rng.integers(0, 2000, size=(50, 2))]
        probs = list(rng.random(50))
        s = slide(probs, coords)
        perm = rng.permutation(50)
        shuffled = SlideRecord("s", MALIGNANT, tuple(s.patches[i] for i in perm))
        np.testing.assert_array_equal(extract_features(s).flatten(),
                                      extract_features(shuffled).flatten())


def test_features_csv_round_trip(tmp_path):
    rng = np.random.default_rng(31)
    rows = []
    for i in range(4):
        coords = [(int(x) * 100, int(y) * 100)
                  for x, y in rng.integers(0, 10, size=(30, 2))]
        s = slide(list(rng.random(30)), coords, slide_id=f"s{i}",
                  label=MALIGNANT if i % 2 else NORMAL)
        rows.append((s.slide_id, s.label, extract_features(s)))
    path = tmp_path / "features.csv"
    write_features_csv(rows, path)
    loaded = read_features_csv(path)
    assert [(sid, lab) for sid, lab, _ in loaded] == [(sid, lab) for sid, lab, _ in rows]
    for (_, _, fv_in), (_, _, fv_out) in zip(rows, loaded):
        np.testing.assert_array_equal(fv_in.flatten(), fv_out.flatten())
