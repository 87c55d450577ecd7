import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncmosr.errors import DataFormatError, InvalidFitSetError, InvalidInputError, MissingClassError
from ncmosr.features import UNKNOWN, FeatureTable
from ncmosr.prototypes import (ClassPrototypes, distance_distribution, distance_distribution_rows,
                               distance_matrix, distance_vector, fit_prototypes)


def table(features, labels, names):
    return FeatureTable([str(i) for i in range(len(labels))], np.asarray(features, float), labels, names)


class TestFit:
    def test_single_sample(self):
        p = fit_prototypes(table([[1.0, 2.0]], [0], ["a"]))
        np.testing.assert_array_equal(p.means, [[1.0, 2.0]])
        assert p.counts.tolist() == [1]

    def test_midpoint(self):
        p = fit_prototypes(table([[0, 0], [2, 2], [5, 5]], [0, 0, 1], ["a", "b"]))
        np.testing.assert_array_equal(p.means, [[1, 1], [5, 5]])

    def test_matches_naive_mean(self, rng):
        n, per, d = 4, 100, 16
        feats = rng.normal(size=(n * per, d)) * 10
        labels = np.tile(np.arange(n), per)
        p = fit_prototypes(table(feats, labels, list("abcd")))
        for c in range(n):
            rows = [feats[i] for i in range(len(labels)) if labels[i] == c]
            for j in range(d):
                naive = sum(r[j] for r in rows) / len(rows)
                assert p.means[c, j] == pytest.approx(naive, abs=1e-12)

    def test_missing_class(self):
        with pytest.raises(MissingClassError, match="'b'"):
            fit_prototypes(table([[0.0]], [0], ["a", "b"]))

    def test_unknown_rows_rejected(self):
        with pytest.raises(InvalidFitSetError):
            fit_prototypes(table([[0.0], [1.0]], [0, UNKNOWN], ["a"]))

    def test_immutable(self):
        p = fit_prototypes(table([[1.0]], [0], ["a"]))
        with pytest.raises(ValueError):
            p.means[0, 0] = 3.0

    def test_l2_normalize_option(self):
        p = fit_prototypes(table([[3.0, 4.0]], [0], ["a"]), l2_normalize=True)
        np.testing.assert_allclose(p.means, [[0.6, 0.8]])


class TestDistances:
    def test_self_distance(self, rng):
        feats = rng.normal(size=(3, 4))
        p = fit_prototypes(table(feats, [0, 1, 2], ["a", "b", "c"]))
        assert distance_vector(feats[1], p)[1] == 0.0

    def test_three_four_five(self):
        p = ClassPrototypes(np.array([[0.0, 0.0], [10.0, 0.0]]), [1, 1], ["a", "b"])
        assert distance_vector([3.0, 4.0], p)[0] == 5.0

    def test_matches_direct_norm(self, rng):
        means = rng.normal(size=(10, 32))
        p = ClassPrototypes(means, np.ones(10, int), [str(i) for i in range(10)])
        for _ in range(20):
            x = rng.normal(size=32)
            expected = [math.sqrt(sum((x[j] - means[c, j]) ** 2 for j in range(32))) for c in range(10)]
            np.testing.assert_allclose(distance_vector(x, p), expected, atol=1e-10)

    def test_matrix_matches_vector(self, rng):
        p = ClassPrototypes(rng.normal(size=(5, 6)), np.ones(5, int), list("abcde"))
        X = rng.normal(size=(20, 6))
        D = distance_matrix(X, p)
        for x, row in zip(X, D):
            np.testing.assert_allclose(row, distance_vector(x, p), rtol=1e-14)

    def test_dimension_mismatch(self):
        p = ClassPrototypes(np.zeros((2, 3)), [1, 1], ["a", "b"])
        with pytest.raises(InvalidInputError):
            distance_vector([1.0, 2.0], p)


class TestDistanceDistribution:
    def test_equal_distances(self):
        np.testing.assert_array_equal(distance_distribution([1.0, 1.0], 0.3), [0.5, 0.5])

    def test_saturates_at_zero_distance(self):
        out = distance_distribution([0.0, 10.0], 1e-8)
        assert out[0] >= 1 - 1e-12

    def test_derived_value(self):
        # mpmath: e / (e + e^(1/3))
        out = distance_distribution([1.0, 3.0], 1e-300)
        np.testing.assert_allclose(out, [0.66075636876581717, 0.33924363123418283], atol=1e-15)

    def test_negative_rejected(self):
        with pytest.raises(InvalidInputError):
            distance_distribution([-1.0, 2.0])

    def test_bad_epsilon(self):
        with pytest.raises(Exception):
            distance_distribution([1.0, 2.0], 0.0)

    @given(st.lists(st.floats(0.0, 100.0), min_size=2, max_size=10, unique=True))
    def test_ranking_preserved(self, distances):
        out = distance_distribution(distances)
        assert out[int(np.argmin(distances))] == out.max()

    def test_strictly_decreasing_in_distance(self):
        base = distance_distribution([1.0, 2.0, 3.0])
        moved = distance_distribution([1.5, 2.0, 3.0])
        assert moved[0] < base[0]

    def test_rows(self, rng):
        D = rng.uniform(0, 5, size=(10, 4))
        rows = distance_distribution_rows(D)
        for d, r in zip(D, rows):
            np.testing.assert_allclose(r, distance_distribution(d), atol=1e-15)


class TestInvariances:
    def test_singleton_class_zero_distance(self, rng):
        feats = rng.normal(size=(5, 3))
        p = fit_prototypes(table(feats, [0, 0, 1, 1, 2], list("abc")))
        assert distance_vector(feats[4], p)[2] == 0.0

    def test_class_permutation(self, rng):
        feats = rng.normal(size=(30, 4))
        labels = np.arange(30) % 3
        perm = np.array([2, 0, 1])  # new class k is old class perm[k]
        inverse = np.argsort(perm)
        a = fit_prototypes(table(feats, labels, ["a", "b", "c"]))
        b = fit_prototypes(table(feats, inverse[labels], ["c", "a", "b"]))
        np.testing.assert_array_equal(b.means, a.means[perm])
        x = rng.normal(size=4)
        np.testing.assert_array_equal(distance_vector(x, b), distance_vector(x, a)[perm])
        np.testing.assert_allclose(distance_distribution(distance_vector(x, b)),
                                   distance_distribution(distance_vector(x, a))[perm], atol=1e-15)

    @settings(max_examples=30)
    @given(st.floats(0.01, 100.0), st.integers(0, 1000))
    def test_common_scaling_keeps_argmax(self, scale, seed):
        g = np.random.default_rng(seed)
        means = g.normal(size=(4, 5))
        x = g.normal(size=5)
        p = ClassPrototypes(means, np.ones(4, int), list("abcd"))
        q = ClassPrototypes(means * scale, np.ones(4, int), list("abcd"))
        d1, d2 = distance_vector(x, p), distance_vector(x * scale, q)
        if np.sort(d1)[1] - np.sort(d1)[0] > 1e-9:
            assert np.argmax(distance_distribution(d1)) == np.argmax(distance_distribution(d2))


class TestSerialisation:
    def test_binary_round_trip(self, tmp_path, rng):
        p = ClassPrototypes(rng.normal(size=(3, 5)), [4, 5, 6], ["x", "y", "zé"])
        p.save(tmp_path / "p.ncmp")
        q = ClassPrototypes.load(tmp_path / "p.ncmp")
        assert q.means.tobytes() == p.means.tobytes()
        assert q.counts.tolist() == [4, 5, 6] and q.class_names == p.class_names
        assert (tmp_path / "p.ncmp").read_bytes()[:4] == b"NCMP"

    def test_json_round_trip(self, tmp_path, rng):
        p = ClassPrototypes(rng.normal(size=(2, 3)), [1, 2], ["x", "y"])
        p.save(tmp_path / "p.json")
        q = ClassPrototypes.load(tmp_path / "p.json")
        np.testing.assert_array_equal(q.means, p.means)

    def test_corrupt(self, tmp_path, rng):
        data = ClassPrototypes(rng.normal(size=(2, 3)), [1, 2], ["x", "y"]).to_bytes()
        with pytest.raises(DataFormatError):
            ClassPrototypes.from_bytes(data[:-9] + data[-8:])
