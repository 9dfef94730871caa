import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_array_equal

from implied_posterior.data import (
    DataError,
    Dataset,
    GaussianSpec,
    MinMaxScaling,
    ScalingParams,
    apply_scaling,
    fit_scaling,
    generate_gaussian_2d,
    load_csv,
    load_german_credit,
    save_csv,
    split_consecutive,
    tutorial_spec,
)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestDataset:
    def test_arrays_are_read_only(self):
        ds = Dataset([[1.0], [2.0]], [1, -1])
        with pytest.raises(ValueError):
            ds.features[0, 0] = 5.0
        assert list(ds.ids) == [0, 1]

    @pytest.mark.parametrize(
        "X, y",
        [([[1.0], [2.0]], [1, 0]), ([[1.0], [np.nan]], [1, -1]), ([[1.0]], [1, -1]), (np.zeros((2, 0)), [1, -1])],
    )
    def test_invalid(self, X, y):
        with pytest.raises(DataError):
            Dataset(X, y)

    def test_equality_by_value(self):
        assert Dataset([[1.0]], [1]) == Dataset([[1.0]], [1])
        assert Dataset([[1.0]], [1]) != Dataset([[1.0]], [-1])


class TestLoadCsv:
    def test_four_rows(self, tmp_path):
        p = _write(tmp_path, "0.5,1.0,1\n1.5,2.0,2\n2.5,3.0,1\n3.5,4.0,2\n")
        ds = load_csv(p, label_column=-1, positive_label="1")
        assert_array_equal(ds.labels, [1, -1, 1, -1])
        assert_array_equal(ds.features[:, 0], [0.5, 1.5, 2.5, 3.5])
        assert_array_equal(ds.ids, [0, 1, 2, 3])

    def test_whitespace_and_header(self, tmp_path):
        p = _write(tmp_path, "a b y\n  1   2  good\n3 4 bad\n")
        ds = load_csv(p, positive_label="good")
        assert_array_equal(ds.labels, [1, -1])
        assert ds.features.shape == (2, 2)

    def test_label_first_column(self, tmp_path):
        p = _write(tmp_path, "label,f0\n1,0.25\n-1,0.75\n")
        ds = load_csv(p, label_column=0, positive_label="1")
        assert_array_equal(ds.labels, [1, -1])

    def test_numeric_spelling_of_positive_label(self, tmp_path):
        p = _write(tmp_path, "1.0,5\n2.0,6\n")
        assert_array_equal(load_csv(p, label_column=0, positive_label="1").labels, [1, -1])

    @pytest.mark.parametrize(
        "text",
        [
            "1,abc,1\n2,3,2\n",  # non-numeric feature in a data row
            "",  # empty
            "x,y\n",  # header only
            "1,1\n2,1\n",  # one label token
            "1,1\n2,2\n3,3\n",  # three label tokens
            "1,2,1\n3,2\n",  # ragged
        ],
    )
    def test_malformed(self, tmp_path, text):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, text), positive_label="1")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv")

    def test_unknown_positive_label(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(_write(tmp_path, "1,1\n2,2\n"), positive_label="7")

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = Dataset(rng.normal(size=(7, 3)), [1, -1, 1, 1, -1, -1, 1])
        save_csv(ds, tmp_path / "x.csv")
        back = load_csv(tmp_path / "x.csv", label_column=0, positive_label="1")
        assert back == ds

    def test_german_credit(self):
        ds = load_german_credit()
        assert (len(ds), ds.n_features) == (1000, 24)
        # the file has 700 records with token 1 and 300 with token 2
        assert (ds.n_plus, ds.n_minus) == (700, 300)


class TestSplit:
    def test_german_halves(self):
        train, test = split_consecutive(load_german_credit(), 500)
        assert len(train) == len(test) == 500
        assert test.ids[0] == 500

    def test_two_rows(self):
        ds = Dataset([[1.0], [2.0]], [1, -1])
        a, b = split_consecutive(ds, 1)
        assert a == ds.subset([0]) and b == ds.subset([1])

    @pytest.mark.parametrize("k", [0, 2, -1])
    def test_out_of_range(self, k):
        with pytest.raises(DataError):
            split_consecutive(Dataset([[1.0], [2.0]], [1, -1]), k)

    @settings(max_examples=50)
    @given(st.integers(min_value=2, max_value=30), st.data())
    def test_concatenation_reconstructs(self, n, data):
        k = data.draw(st.integers(min_value=1, max_value=n - 1))
        X = np.arange(2 * n, dtype=float).reshape(n, 2)
        ds = Dataset(X, np.where(np.arange(n) % 3 == 0, 1, -1))
        a, b = split_consecutive(ds, k)
        joined = Dataset(np.vstack([a.features, b.features]), np.r_[a.labels, b.labels],
                         np.r_[a.ids, b.ids])
        assert joined == ds


class TestGaussian:
    def test_tutorial_preset(self):
        ds = generate_gaussian_2d(tutorial_spec(7))
        assert len(ds) == 20 and ds.n_plus == 10 and ds.n_minus == 10
        assert_array_equal(ds.labels[:10], 1)
        again = generate_gaussian_2d(tutorial_spec(7))
        assert again.features.tobytes() == ds.features.tobytes()

    def test_different_seed_differs(self):
        a = generate_gaussian_2d(tutorial_spec(7))
        b = generate_gaussian_2d(tutorial_spec(8))
        assert a != b

    def test_only_negatives(self):
        spec = GaussianSpec((0, 0), np.eye(2), (1, 1), np.eye(2), 0, 4, 1)
        ds = generate_gaussian_2d(spec)
        assert ds.n_plus == 0 and ds.n_minus == 4

    def test_non_positive_definite(self):
        bad = ((1.0, 0.0), (0.0, -1.0))
        with pytest.raises(DataError):
            generate_gaussian_2d(GaussianSpec((0, 0), bad, (1, 1), np.eye(2), 3, 3, 1))

    def test_sample_mean_converges(self):
        spec = GaussianSpec((2.0, -1.0), ((1.0, 0.3), (0.3, 2.0)), (0.0, 0.0), np.eye(2),
                            20000, 10, 3)
        ds = generate_gaussian_2d(spec)
        pos = ds.features[ds.labels == 1]
        # standard error per coordinate is at most sqrt(2 / 20000) = 0.01
        np.testing.assert_allclose(pos.mean(axis=0), [2.0, -1.0], atol=0.05)
        np.testing.assert_allclose(np.cov(pos.T), spec.cov_plus, atol=0.1)


class TestScaling:
    def test_column_examples(self):
        ds = Dataset([[0.0, 3.0], [5.0, 3.0], [10.0, 3.0]], [1, -1, 1])
        p = fit_scaling(ds)
        assert_array_equal(p.shift, [0.0, 3.0])
        assert_array_equal(p.scale, [10.0, 1.0])
        out = apply_scaling(ds, p)
        assert_array_equal(out.features, [[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
        test = apply_scaling(Dataset([[12.0, 3.0]], [1]), p)
        assert test.features[0, 0] == pytest.approx(1.2)

    @settings(max_examples=50)
    @given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)),
                  elements=st.floats(-1e6, 1e6)))
    def test_training_features_land_in_unit_box(self, X):
        ds = Dataset(X, np.ones(X.shape[0], dtype=int))
        Z = apply_scaling(ds, fit_scaling(ds)).features
        assert np.all(Z >= 0.0) and np.all(Z <= 1.0 + 1e-12)

    def test_params_text_round_trip(self):
        p = ScalingParams([0.1, -2.0], [3.0, 0.7])
        q = ScalingParams.loads(p.dumps())
        assert_array_equal(q.shift, p.shift)
        assert_array_equal(q.scale, p.scale)

    def test_scale_must_be_positive(self):
        with pytest.raises(DataError):
            ScalingParams([0.0], [0.0])

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            apply_scaling(Dataset([[1.0, 2.0]], [1]), ScalingParams([0.0], [1.0]))

    def test_estimator_matches_functions(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(10, 3))
        ds = Dataset(X, np.ones(10, dtype=int))
        np.testing.assert_array_equal(MinMaxScaling().fit_transform(X),
                                      apply_scaling(ds, fit_scaling(ds)).features)
