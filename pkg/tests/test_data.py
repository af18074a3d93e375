import numpy as np
import pytest

import tinygbdt as tg
from tinygbdt.data import load_matrix


def _write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadCsv:
    def test_small_regression_counts(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n1,2,0.5\n3,4,1.5\n5,6,2.5\n7,8,3.5\n")
        ds = tg.load_csv(path, "y", tg.REGRESSION)
        assert (ds.n, ds.d) == (4, 2)
        assert ds.feature_names == ("a", "b")

    def test_breast_cancer_shape(self, breast_cancer):
        assert (breast_cancer.n, breast_cancer.d) == (569, 30)

    def test_blank_cell_reports_row_and_column(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n1,2,0\n1,,1\n")
        with pytest.raises(tg.DatasetError, match=r"line 3.*'b'"):
            tg.load_csv(path, "y", tg.REGRESSION)

    def test_parse_failure_reports_location(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n1,2,0\nx,3,1\n")
        with pytest.raises(tg.DatasetError, match=r"'x'.*line 3.*'a'"):
            tg.load_csv(path, "y", tg.REGRESSION)

    def test_label_by_index_without_header(self, tmp_path):
        path = _write(tmp_path, "1,2,0\n3,4,1\n")
        ds = tg.load_csv(path, 2, tg.BINARY)
        assert (ds.n, ds.d) == (2, 2)
        assert list(ds.labels) == [0, 1]

    def test_label_by_name_requires_header(self, tmp_path):
        path = _write(tmp_path, "1,2,0\n3,4,1\n")
        with pytest.raises(tg.DatasetError, match="no header"):
            tg.load_csv(path, "y", tg.BINARY)

    def test_binary_label_out_of_range(self, tmp_path):
        path = _write(tmp_path, "a,y\n1,0\n2,2\n")
        with pytest.raises(tg.DatasetError, match=r"\[0, 2\)"):
            tg.load_csv(path, "y", tg.BINARY)

    def test_multiclass_inference(self, tmp_path):
        path = _write(tmp_path, "a,y\n1,0\n2,1\n3,2\n4,3\n")
        ds = tg.load_csv(path, "y", tg.TaskKind("multiclass", 0))
        assert ds.task.classes == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            tg.load_csv(tmp_path / "nope.csv", "y", tg.REGRESSION)

    def test_row_order_preserved(self, tmp_path):
        path = _write(tmp_path, "a,y\n9,0\n1,1\n5,0\n")
        ds = tg.load_csv(path, "y", tg.BINARY)
        assert list(ds.features[:, 0]) == [9.0, 1.0, 5.0]

    def test_csv_roundtrip_is_bitwise(self, tmp_path):
        rng = np.random.default_rng(2)
        ds = tg.Dataset(rng.normal(size=(20, 3)) * 1e-7, rng.normal(size=20), tg.REGRESSION)
        path = tmp_path / "round.csv"
        tg.write_csv(ds, path)
        back = tg.load_csv(path, "label", tg.REGRESSION)
        assert np.array_equal(back.features, ds.features)
        assert np.array_equal(back.labels, ds.labels)

    def test_load_matrix_drops_label(self, tmp_path):
        path = _write(tmp_path, "a,b,y\n1,2,0\n3,4,1\n")
        X = load_matrix(path, drop_column="y")
        assert X.shape == (2, 2)
        assert np.array_equal(load_matrix(path), np.array([[1, 2, 0], [3, 4, 1.0]]))


class TestSplit:
    def test_sizes(self, tmp_path):
        rng = np.random.default_rng(0)
        ds = tg.Dataset(rng.normal(size=(10, 2)), rng.normal(size=10), tg.REGRESSION)
        train, test = tg.split_train_test(ds, 0.2, 7)
        assert (train.n, test.n) == (8, 2)

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        ds = tg.Dataset(rng.normal(size=(30, 2)), rng.normal(size=30), tg.REGRESSION)
        a1, b1 = tg.split_train_test(ds, 0.25, 99)
        a2, b2 = tg.split_train_test(ds, 0.25, 99)
        assert np.array_equal(a1.features, a2.features)
        assert np.array_equal(b1.features, b2.features)

    def test_breast_cancer_sizes(self, breast_cancer):
        # floor(569 * 0.2) = 113 test rows
        train, test = tg.split_train_test(breast_cancer, 0.2, 42)
        assert (train.n, test.n) == (456, 113)

    def test_partition_is_bijection(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(25, 2))
        ds = tg.Dataset(X, rng.normal(size=25), tg.REGRESSION)
        train, test = tg.split_train_test(ds, 0.4, 5)
        combined = np.vstack([train.features, test.features])
        key = lambda M: sorted(map(tuple, M))
        assert key(combined) == key(X)

    def test_fraction_errors(self):
        rng = np.random.default_rng(0)
        ds = tg.Dataset(rng.normal(size=(10, 1)), rng.normal(size=10), tg.REGRESSION)
        with pytest.raises(ValueError):
            tg.split_train_test(ds, 0.0, 1)
        with pytest.raises(ValueError):
            tg.split_train_test(ds, 1.0, 1)
        tiny = tg.Dataset(np.ones((3, 1)), np.zeros(3), tg.REGRESSION)
        with pytest.raises(ValueError):
            tg.split_train_test(tiny, 0.05, 1)


def _dataset_from_column(values):
    col = np.asarray(values, dtype=np.float64)
    return tg.Dataset(col[:, None], np.zeros(len(col)), tg.REGRESSION)


class TestCandidates:
    def test_single_midpoint(self):
        cand = tg.candidate_thresholds(_dataset_from_column([0, 1, 0, 1]))
        assert list(cand.thresholds[0]) == [0.5]

    def test_midpoint_enumeration(self):
        # oracle: midpoints of adjacent distinct values of {1, 2, 4}
        u = np.array([1.0, 2.0, 4.0])
        expected = [(u[i] + u[i + 1]) / 2 for i in range(len(u) - 1)]
        cand = tg.candidate_thresholds(_dataset_from_column([1, 2, 4]))
        assert list(cand.thresholds[0]) == expected == [1.5, 3.0]

    def test_constant_feature_is_empty(self):
        cand = tg.candidate_thresholds(_dataset_from_column([5, 5, 5]))
        assert cand.thresholds[0].size == 0

    def test_max_bins_cap_and_ordering(self):
        rng = np.random.default_rng(8)
        values = rng.normal(size=400)
        cand = tg.candidate_thresholds(_dataset_from_column(values), max_bins=16)
        t = cand.thresholds[0]
        assert len(t) <= 16
        assert np.all(np.diff(t) > 0)

    def test_integer_flag(self):
        ds = tg.Dataset(
            np.array([[1.0, 0.5], [2.0, 1.5], [3.0, 2.0]]),
            np.zeros(3),
            tg.REGRESSION,
        )
        cand = tg.candidate_thresholds(ds)
        assert cand.is_integer_valued == (True, False)

    @pytest.mark.parametrize("seed", range(6))
    def test_every_candidate_separates_rows(self, seed):
        rng = np.random.default_rng(seed)
        values = np.round(rng.normal(size=60), 1)  # ties likely
        cand = tg.candidate_thresholds(_dataset_from_column(values), max_bins=12)
        for mu in cand.thresholds[0]:
            left = values <= mu
            assert 0 < left.sum() < len(values)
