import os
from pathlib import Path

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, settings, strategies as st

from mbnn.data import (
    DataError,
    LabelledDataset,
    SplitSpec,
    encode_targets,
    isolet_binarize,
    load_csv,
    load_isolet,
    normalize,
    separable_synthetic,
    split,
    split_once,
    target_vector,
    train_size,
    write_csv,
)

DATA_DIR = Path(os.environ.get("MBNN_DATA_DIR", "data"))
TABLE_FRACTIONS = [0.0025, 0.005, 0.01, 0.02, 0.0333, 0.10, 0.20]


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadCsv:
    def test_basic(self, tmp_path):
        d = load_csv(write(tmp_path, "1,2,a\n3,4,b\n5,6,a\n"))
        assert (d.n_samples, d.n_features, d.n_classes) == (3, 2, 2)
        assert d.class_names == ("a", "b")
        npt.assert_array_equal(d.labels, [0, 1, 0])
        npt.assert_array_equal(d.features, [[1, 2], [3, 4], [5, 6]])

    def test_first_appearance_order(self, tmp_path):
        d = load_csv(write(tmp_path, "0,1\n0,0\n0,1\n"))
        assert d.class_names == ("1", "0")

    def test_header_skipped(self, tmp_path):
        d = load_csv(write(tmp_path, "f1,f2,label\n1,2,x\n"), has_header=True)
        assert d.n_samples == 1

    def test_label_column_index(self, tmp_path):
        d = load_csv(write(tmp_path, "y,1,2\nn,3,4\n"), label_column=0)
        npt.assert_array_equal(d.features, [[1, 2], [3, 4]])
        assert d.class_names == ("y", "n")

    def test_bad_cell_named(self, tmp_path):
        with pytest.raises(DataError, match=r"line 2, column 2"):
            load_csv(write(tmp_path, "1,2,a\n3,x,b\n5,6,a\n"))

    def test_ragged_row_named(self, tmp_path):
        with pytest.raises(DataError, match=r"line 3"):
            load_csv(write(tmp_path, "1,2,a\n3,4,b\n5,a\n"))

    def test_empty_rejected(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(write(tmp_path, ""))

    def test_missing_value_rejected(self, tmp_path):
        with pytest.raises(DataError, match=r"line 1, column 1"):
            load_csv(write(tmp_path, ",2,a\n"))

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        d = LabelledDataset(rng.normal(size=(12, 3)) * 1e3, rng.integers(0, 3, 12), ("p", "q", "r"))
        d = d.subset(np.argsort(d.labels, kind="stable"))  # makes first appearance order p, q, r
        path = tmp_path / "rt.csv"
        write_csv(d, path)
        back = load_csv(path)
        assert np.array_equal(back.features, d.features)
        assert np.array_equal(back.labels, d.labels)
        write_csv(back, tmp_path / "rt2.csv")
        assert (tmp_path / "rt2.csv").read_bytes() == path.read_bytes()


class TestNormalize:
    def test_two_rows(self):
        d = LabelledDataset([[0.0], [2.0]], [0, 1], ("a", "b"))
        npt.assert_allclose(normalize(d, [0, 1]).features[:, 0], [-1.0, 1.0])

    def test_constant_column_unchanged(self):
        d = LabelledDataset([[5.0, 1.0], [5.0, 3.0], [5.0, 2.0]], [0, 1, 0], ("a", "b"))
        out = normalize(d, [0, 1, 2])
        npt.assert_array_equal(out.features[:, 0], [5.0, 5.0, 5.0])

    def test_idempotent_on_standardized(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(50, 4))
        X = (X - X.mean(0)) / X.std(0)
        d = LabelledDataset(X, np.zeros(50, dtype=int), ("a",))
        npt.assert_allclose(normalize(d, np.arange(50)).features, X, atol=1e-12)

    def test_only_training_rows_used(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(20, 3))
        train = np.arange(10)
        a = normalize(LabelledDataset(X, np.zeros(20, dtype=int), ("a",)), train)
        X2 = X.copy()
        X2[10:] = rng.normal(size=(10, 3)) * 1e6
        b = normalize(LabelledDataset(X2, np.zeros(20, dtype=int), ("a",)), train)
        assert np.array_equal(a.feature_stats.mean, b.feature_stats.mean)
        assert np.array_equal(a.feature_stats.std, b.feature_stats.std)

    def test_empty_train_rejected(self):
        with pytest.raises(DataError):
            normalize(separable_synthetic(), [])


class TestTargets:
    def test_three_class(self):
        npt.assert_array_equal(target_vector(1, 3), [-0.5, 0.5, -0.5])

    def test_binary(self):
        npt.assert_array_equal(target_vector(0, 2), [0.5, -0.5])

    @given(st.lists(st.integers(0, 6), min_size=1, max_size=30))
    def test_argmax_round_trip(self, labels):
        T = encode_targets(labels, 7)
        npt.assert_array_equal(np.argmax(T, axis=1), labels)

    def test_out_of_range(self):
        with pytest.raises(DataError):
            encode_targets([3], 3)


class TestSplit:
    def test_floor_rule(self):
        assert train_size(1372, 0.10) == 137
        tr, te = split_once(1372, 0.10, 0, 0)
        assert len(tr) == 137 and len(te) == 1235

    @pytest.mark.parametrize("fraction", TABLE_FRACTIONS)
    def test_partition_and_determinism(self, fraction):
        spec = SplitSpec(fraction, seed=3, repeats=5)
        a = split(19020, spec)
        b = split(19020, spec)
        assert len(a) == 5
        for (tr, te), (tr2, te2) in zip(a, b):
            assert np.array_equal(tr, tr2) and np.array_equal(te, te2)
            assert len(tr) == int(np.floor(fraction * 19020))
            assert not np.intersect1d(tr, te).size
            assert np.array_equal(np.union1d(tr, te), np.arange(19020))
        assert not np.array_equal(a[0][0], a[1][0])

    def test_empty_train_rejected(self):
        with pytest.raises(DataError):
            split_once(1372, 0.0001, 0, 0)

    def test_bad_fraction(self):
        for f in (0.0, 1.0, 1.5):
            with pytest.raises(DataError):
                SplitSpec(f)

    @settings(max_examples=50)
    @given(st.integers(2, 500), st.floats(0.01, 0.99), st.integers(0, 100), st.integers(0, 10))
    def test_partition_property(self, n, fraction, seed, repeat):
        k = train_size(n, fraction)
        if k < 1 or k >= n:
            return
        tr, te = split_once(n, fraction, seed, repeat)
        assert len(tr) == k
        assert np.array_equal(np.sort(np.concatenate([tr, te])), np.arange(n))


class TestIsolet:
    def test_rules(self):
        assert isolet_binarize([5])[0] == 1
        assert isolet_binarize([26])[0] == 0
        assert isolet_binarize(["1.0", "21"]).tolist() == [1, 1]

    def test_five_vowel_classes(self):
        out = isolet_binarize(range(1, 27))
        assert out.sum() == 5
        assert [chr(64 + k) for k in range(1, 27) if out[k - 1]] == list("AEIOU")

    @pytest.mark.parametrize("bad", [0, 27, 2.5, "x"])
    def test_rejects(self, bad):
        with pytest.raises(DataError):
            isolet_binarize([bad])

    def test_file_vowel_count(self, tmp_path):
        rng = np.random.default_rng(0)
        letters = rng.integers(1, 27, size=200)
        rows = "".join(f"{rng.normal()},{rng.normal()},{k}.\n" for k in letters)
        d = load_isolet([write(tmp_path, rows)])
        brute = sum(1 for k in letters if chr(64 + k) in "AEIOU")
        assert int(d.labels.sum()) == brute
        assert d.class_names == ("consonant", "vowel")


class TestSynthetic:
    def test_separable_and_balanced(self):
        d = separable_synthetic()
        assert d.n_samples == 40 and d.labels.sum() == 20
        dist = d.features.sum(axis=1) / np.sqrt(2)
        assert np.all(np.abs(dist) >= 0.5)
        assert np.array_equal(dist > 0, d.labels == 1)


@pytest.mark.skipif(not (DATA_DIR / "data_banknote_authentication.txt").exists(),
                    reason="Banknote file not present")
def test_banknote_counts():
    d = load_csv(DATA_DIR / "data_banknote_authentication.txt")
    assert (d.n_samples, d.n_features, d.n_classes) == (1372, 4, 2)


@pytest.mark.skipif(not (DATA_DIR / "magic04.data").exists(), reason="Magic file not present")
def test_magic_counts():
    d = load_csv(DATA_DIR / "magic04.data")
    assert (d.n_samples, d.n_features, d.n_classes) == (19020, 10, 2)
