"""Tests for categorical field embeddings, hashing and precomputed caches."""

import logging

import numpy as np
import pytest

from tabembed.core.diffcore import Tape, Tensor, backward, count_scalars, gradcheck, sum_
from tabembed.core.embed_cat import (
    CatDeepParams,
    CategoricalEmbedder,
    CategoricalMethod,
    HashingConfig,
    IdTable,
    binary_code,
    binary_width,
    cache_frequent,
    deep_transform_cat,
    default_hash_buckets,
    embed_categorical,
    hash_bucket,
    hash_embed,
    identify,
    onehot,
    param_count_categorical,
    precompute_table,
)
from tabembed.utils.errors import ConfigurationError, OutOfVocabularyError


@pytest.fixture
def rng():
    return np.random.default_rng(11)


@pytest.fixture
def deep_embedder():
    return CategoricalEmbedder("user", "deep", cardinality=100, d=8, d_hat=2, rng=np.random.default_rng(5))


class TestIdentify:
    """Test identification vectors."""

    def test_first_row(self, rng):
        table = IdTable.init(10, 3, rng)
        np.testing.assert_array_equal(identify(0, table).values, table.entries.values[0])

    def test_hand_filled_table(self, rng):
        table = IdTable.init(5, 2, rng)
        table.entries.values[...] = np.arange(10.0).reshape(5, 2)
        np.testing.assert_array_equal(identify(3, table).values, [6.0, 7.0])

    def test_rows_distinct_after_init(self):
        table = IdTable.init(4096, 2, np.random.default_rng(0))
        assert len(np.unique(table.entries.values, axis=0)) == 4096

    def test_reserved_oov_row_is_zero(self, rng):
        table = IdTable.init(5, 3, rng)
        np.testing.assert_array_equal(identify(5, table).values, np.zeros(3))

    @pytest.mark.parametrize("index", [-1, 6])
    def test_out_of_vocabulary(self, rng, index):
        table = IdTable.init(5, 3, rng)
        with pytest.raises(OutOfVocabularyError):
            identify(index, table)

    def test_oov_row_receives_no_gradient(self, rng):
        table = IdTable.init(5, 2, rng)
        with Tape() as tape:
            loss = sum_(identify(np.array([1, 5]), table))
        backward(loss, tape)
        expected = np.zeros((5, 2))
        expected[1] = 1.0
        np.testing.assert_array_equal(table.entries.grad, expected)


class TestDeepTransformCat:
    """Test the shared categorical network."""

    def test_zero_network(self, rng):
        params = CatDeepParams(d_hat=2, d=8, hidden_layers=1, rng=rng)
        params.zero_()
        np.testing.assert_array_equal(deep_transform_cat(Tensor([0.3, -0.7]), params).values, np.zeros(8))

    def test_single_affine_by_hand(self):
        params = CatDeepParams(d_hat=2, d=3, hidden_layers=0)
        layer = params.layers[0]
        assert not layer.activated
        layer.weight.values[...] = [[1.0, 2.0], [0.0, -1.0], [0.5, 0.5]]
        layer.bias.values[...] = [0.0, 1.0, -1.0]
        out = deep_transform_cat(Tensor([2.0, 1.0]), params).values
        np.testing.assert_allclose(out, [4.0, 0.0, 0.5], rtol=0, atol=1e-12)

    def test_gradcheck(self):
        params = CatDeepParams(d_hat=2, d=4, hidden_layers=1, rng=np.random.default_rng(2))
        params.layers[0].exu_bias.values[...] = -0.05
        table = IdTable.init(6, 2, np.random.default_rng(3))
        x = np.array([0, 3, 5])

        def loss():
            return sum_(deep_transform_cat(identify(x, table), params))

        assert gradcheck(loss, [table.entries, *params.parameters().values()]) < 1e-4

    def test_width_mismatch(self, rng):
        params = CatDeepParams(d_hat=2, d=8, rng=rng)
        with pytest.raises(ConfigurationError):
            deep_transform_cat(Tensor(np.zeros(3)), params)


class TestEncodings:
    """Test the parameter-free encodings."""

    def test_onehot(self):
        np.testing.assert_array_equal(onehot(2, 4).values, [0.0, 0.0, 1.0, 0.0])

    def test_onehot_oov_is_zero(self):
        np.testing.assert_array_equal(onehot(4, 4).values, np.zeros(4))

    def test_binary_width(self):
        assert binary_code(0, 5).shape == (3,)
        assert binary_width(2) == 1
        assert binary_width(8) == 3
        assert binary_width(9) == 4

    def test_binary_five(self):
        np.testing.assert_array_equal(binary_code(5, 5).values, [1.0, 0.0, 1.0])

    @pytest.mark.parametrize("v", [2, 3, 17, 1000, 4096])
    def test_codes_unique(self, v):
        idx = np.arange(v + 1)
        assert len(np.unique(onehot(idx, v).values, axis=0)) == v + 1
        assert len(np.unique(binary_code(idx, v).values, axis=0)) == v + 1

    @pytest.mark.parametrize("v", [2, 4, 8, 4096])
    def test_binary_oov_distinct_at_power_of_two(self, v):
        codes = binary_code(np.arange(v), v).values
        oov = binary_code(v, v).values
        assert oov.shape == (binary_width(v),)
        assert not np.any(np.all(codes == oov, axis=1))

    def test_binary_oov_in_batch(self):
        codes = binary_code(np.array([4, 0, 3]), 4).values
        np.testing.assert_array_equal(codes, [[0.5, 0.5], [0.0, 0.0], [1.0, 1.0]])

    def test_out_of_vocabulary(self):
        with pytest.raises(OutOfVocabularyError):
            onehot(7, 4)

    @pytest.mark.slow
    def test_binary_unique_for_every_cardinality(self):
        for v in range(2, 4097):
            codes = binary_code(np.arange(v + 1), v).values
            weights = 1 << np.arange(codes.shape[1] - 1, -1, -1)
            assert len(np.unique(codes @ weights)) == v + 1

    @pytest.mark.slow
    def test_onehot_unique_for_every_cardinality(self):
        for v in range(2, 4097):
            codes = onehot(np.arange(v + 1), v).values
            np.testing.assert_array_equal(codes.argmax(axis=1)[:v], np.arange(v))
            np.testing.assert_array_equal(codes.sum(axis=1), np.r_[np.ones(v), 0.0])


class TestHashing:
    """Test hashed embeddings."""

    def test_single_injective_table_is_lookup(self, rng):
        v, d = 8, 3
        seed = next(s for s in range(1000) if len(set(hash_bucket(np.arange(v), s, 64))) == v)
        cfg = HashingConfig.init(1, 64, d, [seed], rng)
        for x in range(v):
            np.testing.assert_allclose(
                hash_embed(x, cfg).values,
                cfg.tables[0].values[hash_bucket(x, seed, 64)],
                rtol=0,
                atol=1e-15,
            )

    def test_pigeonhole_collisions(self, rng):
        cfg = HashingConfig.init(3, 4, 2, [1, 2, 3], rng)
        for buckets in cfg.buckets(np.arange(10)):
            assert len(np.unique(buckets)) < 10

    @pytest.mark.parametrize("v", [10, 100, 4096])
    def test_every_table_collides_when_buckets_below_v(self, v):
        embedder = CategoricalEmbedder("f", "hashing", cardinality=v, d=2, rng=np.random.default_rng(0))
        for buckets in embedder.hashing.buckets(np.arange(v)):
            assert len(np.unique(buckets)) < v

    @pytest.mark.slow
    def test_collisions_for_every_cardinality(self):
        seeds = np.random.default_rng(0).integers(0, 2**63, size=2, dtype=np.uint64)
        for v in range(2, 4097):
            v_hat = default_hash_buckets(v)
            for seed in seeds:
                assert len(np.unique(hash_bucket(np.arange(v), int(seed), v_hat))) < v

    def test_deterministic_per_seed(self):
        x = np.arange(50)
        np.testing.assert_array_equal(hash_bucket(x, 42, 16), hash_bucket(x, 42, 16))
        assert not np.array_equal(hash_bucket(x, 1, 1 << 20), hash_bucket(x, 2, 1 << 20))

    def test_parameter_count(self):
        assert param_count_categorical("hashing", v=1000, d=8, k=2, v_hat=16) == 256

    def test_aggregation_weights_itemized(self):
        embedder = CategoricalEmbedder(
            "f", "hashing", cardinality=64, d=8, hash_functions=2, hash_buckets=16
        )
        assert embedder.param_count() == 256
        assert embedder.extra_param_count() == 2
        assert count_scalars(embedder.parameters()) == 258

    def test_aggregation_gradcheck(self):
        embedder = CategoricalEmbedder(
            "f", "hashing", cardinality=20, d=3, hash_functions=3, hash_buckets=5,
            rng=np.random.default_rng(4),
        )
        embedder.hashing.agg_weights.values[...] = [0.3, -0.2, 0.1]
        target = Tensor(np.random.default_rng(6).normal(size=(4, 3)))
        x = np.array([0, 7, 13, 19])
        tensors = list(embedder.parameters().values())
        assert gradcheck(lambda: sum_(embedder.embed(x) * target), tensors) < 1e-4


class TestEmbedCategorical:
    """Test method dispatch."""

    def test_deep_zero_network(self, deep_embedder):
        deep_embedder.deep.zero_()
        for x in (0, 17, 99):
            np.testing.assert_array_equal(embed_categorical(x, deep_embedder).values, np.zeros(8))

    def test_output_dims(self):
        assert CategoricalEmbedder("f", "onehot", 4, d=8).output_dim == 4
        assert CategoricalEmbedder("f", "binary", 5, d=8).output_dim == 3
        assert CategoricalEmbedder("f", "lookup", 5, d=8).output_dim == 8

    def test_lookup_row(self):
        embedder = CategoricalEmbedder("f", "lookup", 5, d=4, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(embedder.embed(2).values, embedder.table.entries.values[2])

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError, match="--method"):
            CategoricalEmbedder("f", "bloom", 5, d=4)

    def test_d_hat_must_be_below_d(self):
        with pytest.raises(ConfigurationError, match="--dhat"):
            CategoricalEmbedder("f", "deep", 5, d=4, d_hat=4)

    @pytest.mark.parametrize("method", [m.value for m in CategoricalMethod])
    def test_out_of_vocabulary(self, method):
        embedder = CategoricalEmbedder("f", method, 5, d=8)
        with pytest.raises(OutOfVocabularyError):
            embedder.embed(6)

    @pytest.mark.parametrize("method", [m.value for m in CategoricalMethod])
    def test_pure_function_of_index(self, method):
        embedder = CategoricalEmbedder("f", method, 30, d=8, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(embedder.embed(12).values, embedder.embed(12).values)


class TestParamCount:
    """Test parameter accounting against allocation."""

    def test_lookup(self):
        assert param_count_categorical("lookup", v=1000, d=16) == 16000

    def test_deep_single_affine(self):
        count = param_count_categorical("deep", v=1000, d=16, d_hat=4, ffn_config=(0, None))
        assert count == 4080
        assert count / 16000 == pytest.approx(0.255)

    def test_deep_compresses_large_vocabulary(self):
        deep = param_count_categorical("deep", v=2000, d=16, d_hat=2)
        assert deep <= 0.25 * param_count_categorical("lookup", v=2000, d=16)

    @pytest.mark.parametrize("k", [1, 2, 4])
    @pytest.mark.parametrize("v_hat", [16, 256])
    def test_hashing_matches_allocation(self, k, v_hat):
        embedder = CategoricalEmbedder("f", "hashing", 1000, d=8, hash_functions=k, hash_buckets=v_hat)
        assert embedder.param_count() == k * v_hat * 8
        assert embedder.param_count() + embedder.extra_param_count() == count_scalars(embedder.parameters())

    def test_encodings_are_free(self):
        assert param_count_categorical("onehot", v=1000, d=16) == 0
        assert param_count_categorical("binary", v=1000, d=16) == 0

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            param_count_categorical("bloom", v=10, d=4)

    @pytest.mark.parametrize("v", [10, 1000, 10_000])
    @pytest.mark.parametrize("d", [8, 16])
    @pytest.mark.parametrize("d_hat", [2, 4])
    def test_deep_matches_allocation(self, v, d, d_hat):
        embedder = CategoricalEmbedder("f", "deep", v, d=d, d_hat=d_hat)
        assert embedder.param_count() == count_scalars(embedder.parameters())


class TestPrecompute:
    """Test full tables, frequent-entity caches and staleness."""

    def test_table_shape(self, deep_embedder):
        cache = precompute_table(deep_embedder)
        assert cache.full_table.shape == (100, 8)

    def test_rows_match_on_the_fly(self):
        embedder = CategoricalEmbedder("f", "deep", 1000, d=16, d_hat=4, rng=np.random.default_rng(1))
        cache = precompute_table(embedder)
        direct = np.stack([embedder.embed(i).values for i in range(1000)])
        assert np.max(np.abs(cache.full_table - direct)) <= 1e-12

    def test_hit_counter(self, deep_embedder):
        cache = cache_frequent(deep_embedder, np.arange(100)[::-1], top_k=10)
        cache.fetch(50)
        assert (cache.hits, cache.misses) == (0, 1)
        cache.fetch(50)
        assert (cache.hits, cache.misses) == (1, 1)
        cache.fetch(0)
        assert cache.hits == 2

    def test_frequent_entities_cached(self, deep_embedder):
        counts = np.zeros(100)
        counts[[3, 40, 77]] = [5, 50, 9]
        cache = cache_frequent(deep_embedder, counts, top_k=2)
        assert sorted(cache.rows) == [40, 77]
        np.testing.assert_allclose(cache.fetch(40), deep_embedder.embed(40).values, rtol=0, atol=1e-12)

    def test_stale_after_update(self, deep_embedder, caplog):
        cache = precompute_table(deep_embedder)
        before = cache.fetch(4).copy()
        deep_embedder.id_table.entries.values[4] += 1.0
        deep_embedder.version += 1
        assert cache.is_stale()
        with caplog.at_level(logging.WARNING):
            after = cache.fetch(4)
        assert "stale" in caplog.text
        assert not cache.is_stale()
        assert not np.allclose(before, after)
        np.testing.assert_allclose(after, deep_embedder.embed(4).values, rtol=0, atol=1e-12)

    def test_non_deep_field(self):
        with pytest.raises(ConfigurationError):
            precompute_table(CategoricalEmbedder("f", "lookup", 10, d=4))
