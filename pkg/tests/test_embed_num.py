"""Tests for numerical field embeddings."""

import numpy as np
import pytest

from tabembed.core.diffcore import Tensor, count_scalars, gradcheck, sum_
from tabembed.core.embed_num import (
    DiscretizationParams,
    NumDeepParams,
    NumericalEmbedder,
    NumericalMethod,
    NumExpansionParams,
    deep_transform_num,
    discretize_embed,
    embed_numerical,
    expand,
    handcrafted,
    param_count_numerical,
)
from tabembed.utils.errors import ConfigurationError, DomainError, ParameterError


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def expansion(rng):
    return NumExpansionParams(
        gamma=Tensor(rng.normal(size=5), tracked=True), beta=Tensor(rng.normal(size=5), tracked=True)
    )


class TestExpand:
    """Test feature expansion."""

    def test_zero_gives_bias(self, expansion):
        np.testing.assert_array_equal(expand(0.0, expansion).values, expansion.beta.values)

    def test_unit_input_with_unit_sensitivity(self):
        params = NumExpansionParams.init(4)
        np.testing.assert_array_equal(expand(1.0, params).values, np.ones(4))

    def test_affine_in_input(self, expansion, rng):
        for _ in range(10):
            x1, x2, alpha = rng.uniform(size=3)
            left = expand(alpha * x1 + (1 - alpha) * x2, expansion).values
            right = alpha * expand(x1, expansion).values + (1 - alpha) * expand(x2, expansion).values
            np.testing.assert_allclose(left, right, rtol=0, atol=1e-14)

    def test_monte_carlo_moments(self):
        gamma = np.array([1.0, -2.0, 0.5, 3.0, 1.5])
        beta = np.array([0.2, 0.5, 1.0, -0.3, 0.1])
        params = NumExpansionParams(Tensor(gamma), Tensor(beta))
        x = np.random.default_rng(0).uniform(size=100_000)
        out = expand(x, params).values
        np.testing.assert_allclose(out.mean(axis=0), gamma * 0.5 + beta, rtol=0.01)
        np.testing.assert_allclose(out.var(axis=0), gamma**2 / 12.0, rtol=0.01)

    def test_batch_shape(self, expansion):
        assert expand(np.array([0.1, 0.2, 0.3]), expansion).shape == (3, 5)


class TestDeepTransform:
    """Test the residual ExU network."""

    def test_zero_network_is_identity(self, rng):
        params = NumDeepParams(d=6, layers=3, width=10, rng=rng)
        params.zero_()
        xhat = Tensor(rng.normal(size=6))
        np.testing.assert_array_equal(deep_transform_num(xhat, params).values, xhat.values)

    def test_single_layer_by_hand(self):
        params = NumDeepParams(d=2, layers=1, width=2)
        layer = params.layers[0]
        layer.weight.values[...] = [[1.0, -1.0], [0.5, 2.0]]
        layer.bias.values[...] = [0.1, -0.2]
        layer.exu_weight.values[...] = [0.0, np.log(2.0)]
        layer.exu_bias.values[...] = [0.0, 0.1]

        xhat = Tensor([0.6, 0.2])
        # affine: [0.6 - 0.2 + 0.1, 0.3 + 0.4 - 0.2] = [0.5, 0.5]
        # exu:    [0.5 * 1, (0.5 - 0.1) * 2] = [0.5, 0.8]
        out = deep_transform_num(xhat, params).values
        np.testing.assert_allclose(out, [0.6 + 0.5, 0.2 + 0.8], rtol=0, atol=1e-12)

    def test_gradcheck_all_parameters(self):
        params = NumDeepParams(d=3, layers=2, width=4, rng=np.random.default_rng(3))
        for layer in params.layers:
            layer.exu_bias.values[...] = -0.05
        xhat = Tensor([0.2, 0.5, 0.8])
        tensors = list(params.parameters().values())
        assert gradcheck(lambda: sum_(deep_transform_num(xhat, params)), tensors) < 1e-4

    def test_width_mismatch(self):
        params = NumDeepParams(d=4, layers=1, width=4)
        with pytest.raises(ConfigurationError):
            deep_transform_num(Tensor(np.zeros(3)), params)

    def test_needs_a_layer(self):
        with pytest.raises(ConfigurationError, match="--layers"):
            NumDeepParams(d=4, layers=0, width=4)


class TestHandcrafted:
    """Test the parameter-free function set."""

    def test_zero(self):
        np.testing.assert_array_equal(handcrafted(0.0, 7).values, np.zeros(7))

    def test_unit_input(self):
        np.testing.assert_allclose(handcrafted(1.0, 4).values, [1.0, 1.0, 1.0, np.log(2.0)])

    def test_cycles_to_length(self):
        out = handcrafted(0.25, 6).values
        np.testing.assert_allclose(out, [0.25, 0.0625, 0.5, np.log1p(0.25), 0.25, 0.0625])

    def test_negative_input(self):
        with pytest.raises(DomainError):
            handcrafted(-0.1, 4)

    def test_no_parameters(self):
        assert param_count_numerical("handcrafted", d=10) == 0
        assert NumericalEmbedder("x", "handcrafted", d=10).parameters() == {}


class TestDiscretize:
    """Test soft discretization."""

    @pytest.fixture
    def params(self, rng):
        return DiscretizationParams(
            meta_embeddings=Tensor(rng.normal(scale=0.3, size=(5, 3)), tracked=True),
            scorer_weight=Tensor(np.full(5, 0.5), tracked=True),
            scorer_bias=Tensor(np.linspace(-1.0, 1.0, 5), tracked=True),
        )

    def test_high_temperature_averages(self, params):
        params.temperature = 1e6
        out = discretize_embed(0.3, params).values
        np.testing.assert_allclose(out, params.meta_embeddings.values.mean(axis=0), rtol=0, atol=1e-6)

    def test_dominant_bucket(self, params):
        params.scorer_weight.values[...] = 0.0
        params.scorer_bias.values[...] = [0.0, 0.0, 40.0, 0.0, 0.0]
        out = discretize_embed(0.7, params).values
        np.testing.assert_allclose(out, params.meta_embeddings.values[2], rtol=0, atol=1e-9)

    def test_inside_convex_hull(self, params, rng):
        table = params.meta_embeddings.values
        out = discretize_embed(rng.uniform(size=50), params).values
        assert np.all(out >= table.min(axis=0) - 1e-12)
        assert np.all(out <= table.max(axis=0) + 1e-12)

    @pytest.mark.parametrize("temperature", [0.0, -2.0])
    def test_invalid_temperature(self, params, temperature):
        params.temperature = temperature
        with pytest.raises(ParameterError):
            discretize_embed(0.5, params)

    def test_parameter_count_excludes_scorer(self):
        embedder = NumericalEmbedder("x", "discretize", d=8, buckets=20)
        assert embedder.param_count() == 160
        assert embedder.extra_param_count() == 40
        assert count_scalars(embedder.parameters()) == 200


class TestEmbedNumerical:
    """Test method dispatch."""

    def test_none_passes_value_through(self):
        embedder = NumericalEmbedder("x", "none", d=8)
        np.testing.assert_array_equal(embed_numerical(0.7, embedder).values, [0.7])
        assert embedder.output_dim == 1

    def test_linear_zero(self):
        embedder = NumericalEmbedder("x", "linear", d=8)
        np.testing.assert_array_equal(embed_numerical(0.0, embedder).values, np.zeros(8))

    def test_deep_zero_network_gives_bias(self, rng):
        embedder = NumericalEmbedder("x", "deep", d=6, layers=2, width=12, rng=rng)
        embedder.deep.zero_()
        embedder.expansion.beta.values[...] = rng.normal(size=6)
        np.testing.assert_array_equal(embed_numerical(0.0, embedder).values, embedder.expansion.beta.values)

    def test_deep_zero_network_equals_expand(self, rng):
        embedder = NumericalEmbedder("x", "deep", d=6, layers=2, width=12, rng=rng)
        embedder.deep.zero_()
        embedder.expansion.gamma.values[...] = rng.normal(size=6)
        np.testing.assert_array_equal(
            embedder.embed(0.42).values, expand(0.42, embedder.expansion).values
        )

    def test_expand_method(self):
        embedder = NumericalEmbedder("x", "expand", d=4)
        np.testing.assert_array_equal(embedder.embed(1.0).values, np.ones(4))
        assert embedder.param_count() == 8

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError, match="--method"):
            NumericalEmbedder("x", "spline", d=4)

    @pytest.mark.parametrize("method", [m.value for m in NumericalMethod])
    def test_deterministic(self, method):
        embedder = NumericalEmbedder("x", method, d=4, width=8, rng=np.random.default_rng(1))
        np.testing.assert_array_equal(embedder.embed(0.3).values, embedder.embed(0.3).values)

    @pytest.mark.parametrize("method", [m.value for m in NumericalMethod])
    def test_batch_matches_rows(self, method):
        embedder = NumericalEmbedder("x", method, d=4, width=8, rng=np.random.default_rng(1))
        xs = np.array([0.0, 0.3, 0.9])
        batch = embedder.embed(xs).values
        assert batch.shape == (3, embedder.output_dim)
        for i, x in enumerate(xs):
            np.testing.assert_allclose(batch[i], embedder.embed(x).values, rtol=0, atol=1e-12)


class TestParamCount:
    """Test parameter accounting against allocation."""

    def test_linear(self):
        assert param_count_numerical("linear", d=10) == 10

    def test_none(self):
        assert param_count_numerical("none", d=10) == 0

    def test_single_layer_deep(self):
        assert param_count_numerical("deep", d=8, l=1, width=8) == 104

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError):
            param_count_numerical("spline", d=4)

    @pytest.mark.parametrize("d", [4, 8, 20, 50])
    @pytest.mark.parametrize("layers", [1, 2, 3])
    @pytest.mark.parametrize("wide", [False, True])
    def test_deep_matches_allocation(self, d, layers, wide):
        width = 500 if wide else d
        embedder = NumericalEmbedder("x", "deep", d=d, layers=layers, width=width)
        assert embedder.param_count() == count_scalars(embedder.parameters())
        assert embedder.param_count() == param_count_numerical("deep", d, layers, width)
