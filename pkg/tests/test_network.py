"""Unit tests for the MLP and its hand-rolled differentiation."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pdeflow import network
from pdeflow.errors import ConfigError
from pdeflow.network import NetworkSpec

from conftest import (
    fd_param_jacobian,
    fd_spatial_grad,
    fd_spatial_hess,
    random_small_spec,
    rel_err,
)


class TestParamLayout:
    def test_param_count_matches_layout(self):
        spec = NetworkSpec(input_dim=3, output_dim=2, hidden_widths=(5, 7), embed_L=1)
        d0 = 2 * 2 * 3
        expected = (5 * d0 + 5) + (7 * 5 + 7) + (2 * 7 + 2)
        assert spec.param_count == expected
        w, b, shape = network.param_slices(spec)[-1]
        assert shape == (2, 7)
        assert b.stop == expected

    def test_last_layer_slice_is_contiguous_tail(self):
        spec = NetworkSpec(input_dim=2, output_dim=3, hidden_widths=(4,), embed_L=0)
        sl = network.last_layer_slice(spec)
        assert sl.stop == spec.param_count
        assert sl.stop - sl.start == 3 * 4 + 3
        theta = network.init_params(spec, 0)
        view = theta[sl]
        assert view.base is theta

    def test_unpack_views_share_memory(self):
        spec = NetworkSpec(input_dim=1, output_dim=1, hidden_widths=(3,), embed_L=0)
        theta = network.init_params(spec, 1)
        W1, b1 = network.unpack_params(spec, theta)[0]
        W1[0, 0] = 123.0
        assert theta[0] == 123.0


class TestInitParams:
    def test_deterministic_for_fixed_seed(self):
        spec = NetworkSpec(input_dim=3, output_dim=1)
        a = network.init_params(spec, 0)
        b = network.init_params(spec, 0)
        assert a.dtype == np.float64
        assert np.array_equal(a, b)
        assert not np.array_equal(a, network.init_params(spec, 1))

    def test_biases_zero(self):
        spec = NetworkSpec(input_dim=2, output_dim=2, hidden_widths=(8, 8))
        theta = network.init_params(spec, 3)
        for _W, b in network.unpack_params(spec, theta):
            assert np.all(b == 0.0)

    def test_weight_variance_tracks_fan_in(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, hidden_widths=(100, 100, 100))
        theta = network.init_params(spec, 7)
        for W, _b in network.unpack_params(spec, theta)[1:-1]:
            fan_in = W.shape[1]
            assert np.var(W) == pytest.approx(1.0 / fan_in, rel=0.2)

    def test_all_entries_finite(self):
        spec = NetworkSpec(input_dim=6, output_dim=1)
        assert np.all(np.isfinite(network.init_params(spec, 11)))


class TestEmbed:
    def test_origin_values(self):
        # sin block vanishes at 0; cos block carries the 2^{-k} decay
        spec = NetworkSpec(input_dim=1, output_dim=1, embed_L=2, embed_alpha=1.0, embed_scale=1.0)
        np.testing.assert_allclose(
            network.embed(np.array([0.0]), spec), [0.0, 0.0, 0.0, 1.0, 0.5, 0.25]
        )

    def test_single_frequency_at_one(self):
        spec = NetworkSpec(input_dim=1, output_dim=1, embed_L=0, embed_alpha=1.0, embed_scale=1.0)
        np.testing.assert_allclose(
            network.embed(np.array([1.0]), spec), [1.0, 0.0], atol=1e-15
        )

    def test_scale_is_a_global_multiplier(self):
        base = NetworkSpec(input_dim=2, output_dim=1, embed_L=3, embed_scale=1.0)
        scaled = NetworkSpec(input_dim=2, output_dim=1, embed_L=3, embed_scale=1.5)
        x = np.array([0.37, -0.81])
        np.testing.assert_allclose(
            network.embed(x, scaled), 1.5 * network.embed(x, base), rtol=1e-15
        )

    def test_feature_dimension_contract(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, embed_L=5)
        assert spec.embedded_dim == 2 * 6 * 3
        assert network.embed(np.zeros(3), spec).shape == (36,)

    @pytest.mark.parametrize("k", [0, 1, 3, 5])
    def test_frequency_block_magnitude(self, k):
        # with alpha=1 the sup of the k-th block is 2^{-k} * embed_scale
        spec = NetworkSpec(input_dim=1, output_dim=1, embed_L=5, embed_alpha=1.0, embed_scale=1.5)
        xs = np.linspace(-1.0, 1.0, 4001)[:, None]
        gamma = np.stack([network.embed(x, spec) for x in xs])
        block = np.abs(np.concatenate([gamma[:, k : k + 1], gamma[:, 6 + k : 7 + k]], axis=1))
        bound = 1.5 * 2.0 ** (-k)
        assert block.max() <= bound * (1 + 1e-12)
        assert block.max() >= bound * (1 - 1e-3)


class TestForward:
    def test_envelope_vanishes_on_boundary(self):
        spec = NetworkSpec(
            input_dim=3, output_dim=2, hidden_widths=(6,), embed_L=1, envelope="dirichlet_cube"
        )
        theta = network.init_params(spec, 5)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.uniform(-1, 1, size=3)
            x[rng.integers(0, 3)] = rng.choice([-1.0, 1.0])
            assert np.all(network.forward(spec, theta, x) == 0.0)

    def test_zero_parameters_give_zero_output(self):
        spec = NetworkSpec(input_dim=2, output_dim=1, hidden_widths=(4, 4))
        out = network.forward(spec, np.zeros(spec.param_count), np.array([0.3, -0.4]))
        np.testing.assert_array_equal(out, [0.0])

    def test_hand_built_single_unit(self):
        # N(x) = swish(ws*sin(pi x/2) + wc*cos(pi x/2) + b) * v + c
        spec = NetworkSpec(
            input_dim=1, output_dim=1, hidden_widths=(1,), embed_L=0,
            embed_alpha=0.0, embed_scale=1.0, activation="swish",
        )
        ws, wc, b, v, c = 0.7, -0.4, 0.2, 1.3, 0.1
        theta = np.array([ws, wc, b, v, c])
        x = 0.3
        z = ws * math.sin(math.pi * x / 2) + wc * math.cos(math.pi * x / 2) + b
        swish = z / (1.0 + math.exp(-z))
        expected = swish * v + c
        got = network.forward(spec, theta, np.array([x]))
        assert got[0] == pytest.approx(expected, rel=1e-14)

    def test_batch_matches_pointwise(self):
        spec = NetworkSpec(input_dim=2, output_dim=2, hidden_widths=(5,), embed_L=1)
        theta = network.init_params(spec, 2)
        X = np.random.default_rng(3).uniform(-1, 1, size=(7, 2))
        batch = network.forward(spec, theta, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], network.forward(spec, theta, X[i]), rtol=1e-13, atol=1e-16)

    def test_dimension_mismatch_raises(self):
        spec = NetworkSpec(input_dim=2, output_dim=1, hidden_widths=(3,))
        theta = network.init_params(spec, 0)
        with pytest.raises(ConfigError):
            network.forward(spec, theta[:-1], np.zeros(2))
        with pytest.raises(ConfigError):
            network.forward(spec, theta, np.zeros(3))


class TestSpatialJet:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        for _ in range(25):
            spec = random_small_spec(rng)
            theta = network.init_params(spec, int(rng.integers(0, 1000)))
            x = rng.uniform(-0.9, 0.9, size=spec.input_dim)
            jet = network.spatial_jet(spec, theta, x, order=2)
            np.testing.assert_array_equal(jet.value, network.forward(spec, theta, x))
            assert rel_err(jet.grad, fd_spatial_grad(spec, theta, x)) <= 1e-6
            assert rel_err(jet.hess, fd_spatial_hess(spec, theta, x)) <= 1e-6

    def test_constant_network_has_zero_derivatives(self):
        spec = NetworkSpec(input_dim=3, output_dim=1, hidden_widths=(4,), embed_L=1)
        theta = np.zeros(spec.param_count)
        theta[network.last_layer_slice(spec)][-1] = 2.5  # output bias only
        jet = network.spatial_jet(spec, theta, np.array([0.1, -0.2, 0.7]), order=2)
        np.testing.assert_array_equal(jet.value, [2.5])
        np.testing.assert_array_equal(jet.grad, np.zeros((1, 3)))
        np.testing.assert_array_equal(jet.hess, np.zeros((1, 3, 3)))

    def test_hessian_exactly_symmetric(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            spec = random_small_spec(rng)
            theta = network.init_params(spec, 17)
            x = rng.uniform(-1, 1, size=spec.input_dim)
            h = network.spatial_jet(spec, theta, x, order=2).hess
            np.testing.assert_array_equal(h, np.swapaxes(h, -1, -2))

    def test_batched_jets_match_single(self):
        spec = NetworkSpec(
            input_dim=2, output_dim=2, hidden_widths=(6,), embed_L=1, envelope="dirichlet_cube"
        )
        theta = network.init_params(spec, 4)
        X = np.random.default_rng(5).uniform(-1, 1, size=(5, 2))
        jets = network.spatial_jet(spec, theta, X, order=2)
        for i in range(5):
            ji = network.spatial_jet(spec, theta, X[i], order=2)
            np.testing.assert_allclose(jets.value[i], ji.value, rtol=1e-13, atol=1e-16)
            np.testing.assert_allclose(jets.grad[i], ji.grad, rtol=1e-13, atol=1e-15)
            np.testing.assert_allclose(jets.hess[i], ji.hess, rtol=1e-13, atol=1e-14)

    def test_order_limits(self):
        spec = NetworkSpec(input_dim=1, output_dim=1, hidden_widths=())
        theta = network.init_params(spec, 0)
        jet = network.spatial_jet(spec, theta, np.zeros(1), order=0)
        assert jet.grad is None and jet.hess is None
        with pytest.raises(ConfigError):
            network.spatial_jet(spec, theta, np.zeros(1), order=3)


class TestParamJvp:
    def test_unit_vectors_recover_jacobian_columns(self):
        rng = np.random.default_rng(0)
        spec = NetworkSpec(input_dim=2, output_dim=2, hidden_widths=(3,), embed_L=0)
        assert spec.param_count <= 50
        theta = network.init_params(spec, 1)
        X = rng.uniform(-1, 1, size=(4, 2))
        J = fd_param_jacobian(spec, theta, X)
        for j in range(spec.param_count):
            e = np.zeros(spec.param_count)
            e[j] = 1.0
            col = network.param_jvp(spec, theta, e, X)
            assert rel_err(col, J[:, :, j]) <= 1e-6

    def test_zero_direction(self):
        spec = NetworkSpec(input_dim=1, output_dim=1, hidden_widths=(4,))
        theta = network.init_params(spec, 2)
        X = np.linspace(-0.5, 0.5, 6)[:, None]
        out = network.param_jvp(spec, theta, np.zeros(spec.param_count), X)
        np.testing.assert_array_equal(out, np.zeros((6, 1)))

    def test_linearity(self):
        spec = NetworkSpec(input_dim=2, output_dim=1, hidden_widths=(5,), embed_L=1)
        theta = network.init_params(spec, 3)
        rng = np.random.default_rng(4)
        X = rng.uniform(-1, 1, size=(8, 2))
        v = rng.normal(size=spec.param_count)
        lhs = network.param_jvp(spec, theta, 2.5 * v, X)
        rhs = 2.5 * network.param_jvp(spec, theta, v, X)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(1.0, np.max(np.abs(rhs)))

    def test_stacked_directions(self):
        spec = NetworkSpec(input_dim=2, output_dim=2, hidden_widths=(4,), embed_L=0)
        theta = network.init_params(spec, 5)
        rng = np.random.default_rng(6)
        X = rng.uniform(-1, 1, size=(3, 2))
        V = rng.normal(size=(4, spec.param_count))
        stacked = network.param_jvp(spec, theta, V, X)
        assert stacked.shape == (4, 3, 2)
        for m in range(4):
            np.testing.assert_allclose(stacked[m], network.param_jvp(spec, theta, V[m], X), rtol=1e-13, atol=1e-15)


class TestParamVjp:
    def test_adjoint_identity(self):
        rng = np.random.default_rng(10)
        for _ in range(10):
            spec = random_small_spec(rng)
            theta = network.init_params(spec, int(rng.integers(0, 100)))
            X = rng.uniform(-1, 1, size=(5, spec.input_dim))
            v = rng.normal(size=spec.param_count)
            u = rng.normal(size=(5, spec.output_dim))
            lhs = np.sum(u * network.param_jvp(spec, theta, v, X))
            rhs = np.dot(network.param_vjp(spec, theta, u, X), v)
            tol = 1e-10 * max(np.linalg.norm(u) * np.linalg.norm(v), 1e-30)
            assert abs(lhs - rhs) <= tol

    def test_zero_adjoint(self):
        spec = NetworkSpec(input_dim=1, output_dim=2, hidden_widths=(3,))
        theta = network.init_params(spec, 0)
        X = np.zeros((4, 1))
        out = network.param_vjp(spec, theta, np.zeros((4, 2)), X)
        np.testing.assert_array_equal(out, np.zeros(spec.param_count))

    def test_matches_dense_transpose(self):
        rng = np.random.default_rng(11)
        spec = NetworkSpec(input_dim=1, output_dim=1, hidden_widths=(3,), embed_L=1)
        theta = network.init_params(spec, 12)
        X = rng.uniform(-1, 1, size=(6, 1))
        u = rng.normal(size=(6, 1))
        J = fd_param_jacobian(spec, theta, X).reshape(6, spec.param_count)
        assert rel_err(network.param_vjp(spec, theta, u, X), J.T @ u[:, 0]) <= 1e-6

    def test_stacked_adjoints(self):
        spec = NetworkSpec(input_dim=2, output_dim=1, hidden_widths=(4,), embed_L=0)
        theta = network.init_params(spec, 13)
        rng = np.random.default_rng(14)
        X = rng.uniform(-1, 1, size=(5, 2))
        U = rng.normal(size=(3, 5, 1))
        stacked = network.param_vjp(spec, theta, U, X)
        assert stacked.shape == (3, spec.param_count)
        for m in range(3):
            np.testing.assert_allclose(stacked[m], network.param_vjp(spec, theta, U[m], X), rtol=1e-13, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    depth=st.integers(0, 2),
    env=st.sampled_from(["none", "dirichlet_cube"]),
    act=st.sampled_from(["swish", "tanh", "relu"]),
)
def test_adjoint_identity_property(seed, depth, env, act):
    """<u, Jv> == <J^T u, v> for any architecture and random data."""
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(
        input_dim=int(rng.integers(1, 4)),
        output_dim=int(rng.integers(1, 3)),
        hidden_widths=tuple(int(rng.integers(1, 7)) for _ in range(depth)),
        embed_L=int(rng.integers(0, 3)),
        activation=act,
        envelope=env,
    )
    theta = network.init_params(spec, seed % 1000)
    X = rng.uniform(-1, 1, size=(4, spec.input_dim))
    cache = network.forward_cache(spec, theta, X)
    v = rng.normal(size=spec.param_count)
    u = rng.normal(size=(4, spec.output_dim))
    lhs = np.sum(u * network.param_jvp(spec, theta, v, X, cache=cache))
    rhs = np.dot(network.param_vjp(spec, theta, u, X, cache=cache), v)
    assert abs(lhs - rhs) <= 1e-10 * max(np.linalg.norm(u) * np.linalg.norm(v), 1e-30)


def test_forward_cache_output_matches_forward():
    spec = NetworkSpec(input_dim=2, output_dim=2, hidden_widths=(5,), envelope="dirichlet_cube")
    theta = network.init_params(spec, 21)
    X = np.random.default_rng(22).uniform(-1, 1, size=(9, 2))
    cache = network.forward_cache(spec, theta, X)
    np.testing.assert_array_equal(cache.out, network.forward(spec, theta, X))
