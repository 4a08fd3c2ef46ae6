import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from additive_ae.dataio import (
    RANGE_EPS, DataError, RawTable, apply_normalization, eliminate_constant_features, load_csv,
    normalize, prepare, split_rows,
)


class TestLoadCsv:
    def test_plain(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,4\n5,6\n")
        t = load_csv(p)
        assert t.shape == (3, 2)
        np.testing.assert_array_equal(t.values, [[1, 2], [3, 4], [5, 6]])
        assert t.column_names is None

    def test_header(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("a,b\n1,2\n")
        t = load_csv(p, has_header=True)
        assert t.shape == (1, 2)
        assert t.column_names == ["a", "b"]

    def test_nan_names_location(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3,NaN\n")
        with pytest.raises(DataError, match="line 2, column 2"):
            load_csv(p)

    def test_unparseable(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\nx,4\n")
        with pytest.raises(DataError, match="line 2, column 1"):
            load_csv(p)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("")
        with pytest.raises(DataError, match="no data"):
            load_csv(p)

    def test_ragged(self, tmp_path):
        p = tmp_path / "a.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(DataError, match="expected 2 columns"):
            load_csv(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv")


class TestConstantFeatures:
    def test_constant_dropped(self):
        x = np.column_stack([np.full(5, 5.0), np.arange(5.0)])
        mask = eliminate_constant_features(RawTable(x))
        assert mask.kept.tolist() == [False, True]
        assert mask.n == 1

    def test_threshold(self):
        assert RANGE_EPS == pytest.approx(1.4901e-8, rel=1e-4)
        base = np.zeros(4)
        x = np.column_stack([base + [0, 1e-9, 0, 0], base + [0, 1e-7, 0, 0], np.arange(4.0)])
        mask = eliminate_constant_features(RawTable(x))
        assert mask.kept.tolist() == [False, True, True]

    def test_all_constant(self):
        with pytest.raises(DataError, match="no informative features"):
            eliminate_constant_features(RawTable(np.ones((4, 3))))

    @given(arrays(np.float64, (12, 4), elements=st.sampled_from([0.0, 1.0, 2.5, -3.0])),
           st.permutations(list(range(12))))
    def test_row_permutation_invariant(self, x, perm):
        try:
            a = eliminate_constant_features(RawTable(x)).kept
        except DataError:
            with pytest.raises(DataError):
                eliminate_constant_features(RawTable(x[perm]))
            return
        np.testing.assert_array_equal(a, eliminate_constant_features(RawTable(x[perm])).kept)


class TestNormalize:
    def test_symmetric(self):
        ds = prepare(RawTable(np.array([[0.0], [1.0], [2.0]])))
        np.testing.assert_allclose(ds.data[:, 0], [-1, 0, 1], atol=1e-15)
        assert ds.params.means[0] == 1.0 and ds.params.scales[0] == 1.0

    def test_skewed(self):
        # (x - 1) * 2/3 by hand
        ds = prepare(RawTable(np.array([[0.0], [0.0], [3.0]])))
        np.testing.assert_allclose(ds.data[:, 0], [-2 / 3, -2 / 3, 4 / 3], rtol=1e-15)
        assert np.ptp(ds.data) == pytest.approx(2.0, abs=1e-15)
        assert abs(ds.data.mean()) < 1e-15

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (20, 5),
                  elements=st.floats(-1e4, 1e4, allow_nan=False, allow_infinity=False)))
    def test_invariants(self, x):
        t = RawTable(x)
        try:
            ds = prepare(t)
        except DataError:
            return
        scale = max(1.0, float(np.max(np.abs(x))) / 1e3)
        assert np.max(np.abs(ds.data.mean(axis=0))) <= 1e-10 * scale
        np.testing.assert_allclose(np.ptp(ds.data, axis=0), 2.0, atol=1e-10)
        back = ds.denormalize(ds.data)
        np.testing.assert_allclose(back, x[:, ds.mask.kept], rtol=1e-12, atol=1e-12 * np.max(np.abs(x)))

    def test_apply_to_training_table_is_identical(self, rng):
        t = RawTable(rng.normal(size=(30, 4)))
        ds = prepare(t)
        again = apply_normalization(ds.params, ds.mask, t)
        np.testing.assert_array_equal(again.data, ds.data)

    def test_mean_row_maps_to_zero(self, rng):
        x = rng.normal(size=(30, 4))
        x[:, 2] = 7.0
        ds = prepare(RawTable(x))
        v = RawTable(x.mean(axis=0, keepdims=True))
        np.testing.assert_allclose(apply_normalization(ds.params, ds.mask, v).data, 0.0, atol=1e-15)

    def test_no_clipping(self):
        ds = prepare(RawTable(np.array([[0.0], [2.0]])))
        out = apply_normalization(ds.params, ds.mask, RawTable(np.array([[10.0]]))).data
        assert out[0, 0] == pytest.approx(9.0)

    def test_feature_count_mismatch(self, rng):
        ds = prepare(RawTable(rng.normal(size=(10, 3))))
        with pytest.raises(DataError, match="mismatch"):
            apply_normalization(ds.params, ds.mask, RawTable(rng.normal(size=(2, 4))))

    def test_mask_must_match(self, rng):
        t = RawTable(rng.normal(size=(10, 3)))
        other = eliminate_constant_features(RawTable(rng.normal(size=(10, 4))))
        with pytest.raises(DataError):
            normalize(t, other)


def test_split_rows(rng):
    t = RawTable(rng.normal(size=(50, 3)))
    a, b = split_rows(t, 0.8, seed=1)
    assert a.shape == (40, 3) and b.shape == (10, 3)
    both = np.vstack([a.values, b.values])
    assert sorted(map(tuple, both)) == sorted(map(tuple, t.values))


def test_glass_has_ten_features(glass):
    assert glass.data.shape == (214, 10)
