import numpy as np
import pytest

from fewprobe.core import (
    BinaryFingerprint,
    EmbeddingSet,
    Episode,
    LabelledSample,
    TrainConfig,
    normalize_embedding,
    split_by_label,
)
from fewprobe.errors import DimMismatch, ZeroVector


class TestNormalizeEmbedding:
    def test_three_four_five_triangle(self):
        np.testing.assert_allclose(normalize_embedding([3.0, 4.0]),
                                   [0.6, 0.8], atol=1e-15)

    def test_already_unit(self):
        np.testing.assert_array_equal(normalize_embedding([1.0, 0.0, 0.0]),
                                      [1.0, 0.0, 0.0])

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            normalize_embedding([0.0, 0.0])

    def test_output_is_unit_norm(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            v = rng.standard_normal(rng.integers(2, 64)) * rng.uniform(0.01, 50)
            assert abs(np.linalg.norm(normalize_embedding(v)) - 1.0) <= 1e-9

    def test_positive_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            v = rng.standard_normal(8)
            c = rng.uniform(1e-3, 1e3)
            np.testing.assert_allclose(normalize_embedding(c * v),
                                       normalize_embedding(v), atol=1e-12)


class TestEmbeddingSet:
    def test_normalizes_and_counts(self):
        es = EmbeddingSet.from_vectors({"a": [3.0, 4.0], "b": [1.0, 0.0]})
        assert es.renormalized == 1
        assert abs(np.linalg.norm(es.vector("a")) - 1.0) <= 1e-9
        assert es.dim == 2 and len(es) == 2 and "a" in es

    def test_dim_mismatch(self):
        with pytest.raises(DimMismatch):
            EmbeddingSet.from_vectors({"a": [1.0, 0.0], "b": [1.0, 0.0, 0.0]})

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            EmbeddingSet.from_vectors({})

    def test_matrix_stacks_in_order(self):
        es = EmbeddingSet.from_vectors({"a": [1.0, 0.0], "b": [0.0, 1.0]})
        m = es.matrix(["b", "a"])
        np.testing.assert_array_equal(m, [[0.0, 1.0], [1.0, 0.0]])


class TestEpisode:
    def _samples(self, *pairs):
        return tuple(LabelledSample(i, l) for i, l in pairs)

    def test_valid(self):
        ep = Episode(task_id="t",
                     support=self._samples(("a", 0), ("b", 1)),
                     query=self._samples(("c", 0), ("d", 1)))
        assert ep.support_positive_count == 1

    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            Episode(task_id="t",
                    support=self._samples(("a", 0), ("b", 1)),
                    query=self._samples(("a", 0), ("d", 1)))

    def test_single_class_support_rejected(self):
        with pytest.raises(ValueError):
            Episode(task_id="t",
                    support=self._samples(("a", 1), ("b", 1)),
                    query=self._samples(("c", 0), ("d", 1)))

    def test_single_class_query_rejected(self):
        with pytest.raises(ValueError):
            Episode(task_id="t",
                    support=self._samples(("a", 0), ("b", 1)),
                    query=self._samples(("c", 1), ("d", 1)))


class TestTrainConfig:
    def test_defaults_valid(self):
        cfg = TrainConfig()
        assert cfg.epochs == 100 and cfg.shrinkage_lambda == 0.2

    @pytest.mark.parametrize("kwargs", [
        {"epochs": 0},
        {"learning_rate": 0.0},
        {"shrinkage_lambda": -0.1},
        {"shrinkage_lambda": 1.1},
        {"temperature": 0.0},
        {"free_opt_reg_weight": -1.0},
    ])
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)


class TestBinaryFingerprint:
    def test_hex_round_trip(self):
        fp = BinaryFingerprint(bits=np.array([1, 1, 0, 0, 1, 0, 1, 0],
                                             dtype=np.uint8))
        back = BinaryFingerprint.from_hex(fp.to_hex(), 8)
        np.testing.assert_array_equal(back.bits, fp.bits)

    def test_non_binary_rejected(self):
        with pytest.raises(ValueError):
            BinaryFingerprint(bits=np.array([0, 2], dtype=np.uint8))

    def test_length(self):
        assert len(BinaryFingerprint(bits=np.zeros(16, dtype=np.uint8))) == 16


def test_split_by_label():
    samples = [LabelledSample("a", 0), LabelledSample("b", 1),
               LabelledSample("c", 1)]
    neg, pos = split_by_label(samples)
    assert [s.id for s in neg] == ["a"]
    assert [s.id for s in pos] == ["b", "c"]
