"""Layer kernels: forward against direct-summation oracles, backward against
central finite differences, loss identities, batch-norm recompute."""

import numpy as np
import pytest

from oracles import conv2d_direct, dense_direct, finite_difference, grads_close

from projnet import (ConfigError, NumericError, backward, batchnorm,
                     conv2d, dense, flatten, forward, init_network,
                     one_vs_rest_targets, recompute_bn_stats, relu,
                     square_hinge_loss)
from projnet.nn import output_shapes


def small_net(layers, input_shape=(1, 8, 8), seed=0):
    return init_network(input_shape, layers, seed=seed)


class TestForward:
    def test_identity_conv_maps_input_to_itself(self):
        net = small_net([conv2d(1, 1, 1, 1)], input_shape=(1, 4, 4))
        net.weights[0] = np.ones((1, 1, 1, 1))
        net.biases[0] = np.zeros(1)
        x = np.random.default_rng(0).standard_normal((3, 1, 4, 4))
        y, _ = forward(net, net.weights, x, "infer")
        np.testing.assert_array_equal(y, x)

    def test_relu_clamps_negatives(self):
        net = small_net([relu()], input_shape=(3,))
        y, _ = forward(net, net.weights, np.array([[-1.0, 0.0, 2.0]]), "infer")
        np.testing.assert_array_equal(y, [[0.0, 0.0, 2.0]])

    def test_conv_matches_direct_summation_oracle(self):
        rng = np.random.default_rng(42)
        for stride, pad in [(1, 0), (1, 1), (2, 1), (3, 2)]:
            x = rng.standard_normal((2, 3, 8, 8))
            w = rng.standard_normal((4, 3, 3, 3))
            b = rng.standard_normal(4)
            net = small_net([conv2d(3, 3, 3, 4, stride=stride, padding=pad)],
                            input_shape=(3, 8, 8))
            net.weights[0], net.biases[0] = w, b
            y, _ = forward(net, net.weights, x, "infer")
            np.testing.assert_allclose(y, conv2d_direct(x, w, b, stride, pad),
                                       atol=1e-12)

    def test_two_layer_net_matches_hand_rolled_oracle(self):
        # fixed-seed 2-layer net on a 3x3 input, checked against loops only
        rng = np.random.default_rng(7)
        x = rng.standard_normal((2, 2, 3, 3))
        net = small_net([conv2d(2, 2, 2, 3), flatten(), dense(3 * 2 * 2, 2)],
                        input_shape=(2, 3, 3), seed=7)
        y, _ = forward(net, net.weights, x, "infer")
        mid = conv2d_direct(x, net.weights[0], net.biases[0], 1, 0)
        ref = dense_direct(mid.reshape(2, -1), net.weights[2], net.biases[2])
        np.testing.assert_allclose(y, ref, atol=1e-12)

    def test_forward_is_deterministic(self, tiny_net):
        x = np.random.default_rng(5).standard_normal((4, 1, 8, 8))
        y1, _ = forward(tiny_net, tiny_net.weights, x, "infer")
        y2, _ = forward(tiny_net, tiny_net.weights, x, "infer")
        np.testing.assert_array_equal(y1, y2)

    def test_conv_term_is_linear_in_weights(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 2, 6, 6))
        w1 = rng.standard_normal((3, 2, 3, 3))
        w2 = rng.standard_normal((3, 2, 3, 3))
        a, b = 1.7, -0.4
        net = small_net([conv2d(3, 3, 2, 3, padding=1)], input_shape=(2, 6, 6))
        net.biases[0] = np.zeros(3)

        def run(w):
            net.weights[0] = w
            return forward(net, net.weights, x, "infer")[0]

        np.testing.assert_allclose(run(a * w1 + b * w2), a * run(w1) + b * run(w2),
                                   atol=1e-10)

    def test_batchnorm_train_mode_normalizes(self):
        net = small_net([batchnorm(3)], input_shape=(3, 5, 5))
        x = np.random.default_rng(1).standard_normal((8, 3, 5, 5)) * 4.0 + 2.0
        y, _ = forward(net, net.weights, x, "train")
        # gamma=1, beta=0 -> output should be normalized per channel
        mu = y.mean(axis=(0, 2, 3))
        var = y.var(axis=(0, 2, 3))
        assert np.all(np.abs(mu) < 1e-6)
        assert np.all(np.abs(var - 1.0) < 1e-6)

    def test_shape_mismatch_is_config_error(self, tiny_net):
        with pytest.raises(ConfigError):
            forward(tiny_net, tiny_net.weights, np.zeros((2, 1, 9, 9)), "infer")

    def test_nonfinite_output_names_layer(self, tiny_net):
        tiny_net.weights[0][:] = np.inf
        with pytest.raises(NumericError, match="layer 0"):
            forward(tiny_net, tiny_net.weights, np.zeros((2, 1, 8, 8)), "infer")

    def test_chain_validation_rejects_bad_dims(self):
        with pytest.raises(ConfigError):
            output_shapes((1, 8, 8), [conv2d(3, 3, 2, 4)])  # wrong in_channels
        with pytest.raises(ConfigError):
            output_shapes((4,), [dense(5, 2)])  # wrong in_features


class TestBackward:
    def test_zero_loss_grad_gives_zero_param_grads(self, tiny_net):
        x = np.random.default_rng(0).standard_normal((4, 1, 8, 8))
        logits, cache = forward(tiny_net, tiny_net.weights, x, "train")
        wg, bg, bng = backward(tiny_net, cache, np.zeros_like(logits))
        for i in tiny_net.parametric_indices:
            assert not wg[i].any()
            assert not bg[i].any()
        for i in tiny_net.bn_indices:
            assert not bng[i][0].any() and not bng[i][1].any()

    def test_relu_blocks_gradient_at_negative_preactivation(self):
        net = small_net([relu()], input_shape=(3,))
        x = np.array([[-2.0, 0.5, 1.0]])
        _, cache = forward(net, net.weights, x, "train")
        # feed grad through manually: relu has no params, check via dense above
        net2 = small_net([dense(3, 3), relu()], input_shape=(3,))
        net2.weights[0] = np.eye(3)
        net2.biases[0] = np.zeros(3)
        _, cache2 = forward(net2, net2.weights, x, "train")
        wg, _, _ = backward(net2, cache2, np.ones((1, 3)))
        # column feeding the negative activation gets zero gradient
        assert not wg[0][:, 0].any()
        assert wg[0][:, 1].any() and wg[0][:, 2].any()

    def test_infer_cache_is_rejected(self, tiny_net):
        x = np.zeros((2, 1, 8, 8))
        logits, cache = forward(tiny_net, tiny_net.weights, x, "infer")
        with pytest.raises(ValueError):
            backward(tiny_net, cache, np.zeros_like(logits))

    def test_mismatched_loss_grad_shape_rejected(self, tiny_net):
        x = np.zeros((2, 1, 8, 8))
        _, cache = forward(tiny_net, tiny_net.weights, x, "train")
        with pytest.raises(ValueError):
            backward(tiny_net, cache, np.zeros((3, 4)))

    @pytest.mark.parametrize("layers,in_shape", [
        ([conv2d(3, 3, 2, 3, stride=1, padding=1)], (2, 5, 5)),
        ([conv2d(3, 3, 2, 3, stride=2, padding=1)], (2, 6, 6)),
        ([dense(6, 4)], (6,)),
        ([batchnorm(3)], (3, 4, 4)),
        ([dense(5, 5), batchnorm(5)], (5,)),
        ([conv2d(3, 3, 1, 2, padding=1), batchnorm(2), relu(), flatten(),
          dense(2 * 4 * 4, 3)], (1, 4, 4)),
    ])
    def test_every_layer_kind_matches_finite_differences(self, layers, in_shape):
        net = small_net(layers, input_shape=in_shape, seed=11)
        rng = np.random.default_rng(99)
        x = rng.standard_normal((5,) + in_shape)
        out_shape = output_shapes(in_shape, net.layers)[-1]
        t = np.where(rng.random((5,) + tuple(np.atleast_1d(np.prod(out_shape)))) < 0.5,
                     1.0, -1.0).reshape((5, -1))

        def loss_fn():
            logits, _ = forward(net, net.weights, x, "train")
            return square_hinge_loss(logits.reshape(5, -1), t)[0]

        logits, cache = forward(net, net.weights, x, "train")
        loss, grad = square_hinge_loss(logits.reshape(5, -1), t)
        wg, bg, bng = backward(net, cache, grad.reshape(logits.shape))

        for i in net.parametric_indices:
            assert grads_close(wg[i], finite_difference(loss_fn, net.weights[i])), \
                f"weight grads differ at layer {i}"
            assert grads_close(bg[i], finite_difference(loss_fn, net.biases[i])), \
                f"bias grads differ at layer {i}"
        for i in net.bn_indices:
            st = net.bn_state[i]
            assert grads_close(bng[i][0], finite_difference(loss_fn, st.gamma))
            assert grads_close(bng[i][1], finite_difference(loss_fn, st.beta))


class TestSquareHinge:
    def test_perfect_prediction_gives_zero(self):
        o = np.ones((3, 4))
        loss, grad = square_hinge_loss(o, np.ones((3, 4)))
        assert loss == 0.0
        assert not grad.any()

    def test_single_element_closed_form(self):
        # o=0, t=+1: loss = max(0, 1)^2 = 1, d/do = -2(1 - o) = -2
        loss, grad = square_hinge_loss(np.array([[0.0]]), np.array([[1.0]]))
        assert loss == 1.0
        assert grad[0, 0] == -2.0

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        o = rng.standard_normal((6, 5))
        t = np.where(rng.random((6, 5)) < 0.5, 1.0, -1.0)
        _, grad = square_hinge_loss(o, t)
        num = finite_difference(lambda: square_hinge_loss(o, t)[0], o)
        assert grads_close(grad, num, rel=1e-6, abs_floor=1e-10)

    def test_bad_targets_rejected(self):
        with pytest.raises(ValueError):
            square_hinge_loss(np.zeros((2, 2)), np.zeros((2, 2)))

    def test_one_vs_rest_codes(self):
        t = one_vs_rest_targets(np.array([0, 2]), 3)
        np.testing.assert_array_equal(t, [[1, -1, -1], [-1, -1, 1]])


class TestRecomputeBnStats:
    def test_converged_stats_are_fixed_point(self, tiny_net, tiny_data):
        stats = recompute_bn_stats(tiny_net, tiny_net.weights, tiny_data.train.images)
        tiny_net.bn_state = stats
        again = recompute_bn_stats(tiny_net, tiny_net.weights, tiny_data.train.images)
        for a, b in zip(stats, again):
            if a is None:
                continue
            np.testing.assert_allclose(a.running_mean, b.running_mean, atol=1e-6)
            np.testing.assert_allclose(a.running_var, b.running_var, atol=1e-6)

    def test_normalized_activations_have_zero_mean_unit_var(self, tiny_net, tiny_data):
        from projnet.nn import _forward_prefix

        net = tiny_net.copy()
        net.bn_state = recompute_bn_stats(net, net.weights, tiny_data.train.images)
        for bn_i in net.bn_indices:
            pre = _forward_prefix(net, net.weights, tiny_data.train.images, bn_i)
            st = net.bn_state[bn_i]
            eps = net.layers[bn_i].eps
            axes = (0,) if pre.ndim == 2 else (0, 2, 3)
            xhat = (pre - st.running_mean.reshape([1, -1] + [1] * (pre.ndim - 2))) / \
                np.sqrt(st.running_var.reshape([1, -1] + [1] * (pre.ndim - 2)) + eps)
            assert np.all(np.abs(xhat.mean(axis=axes)) < 1e-3)
            assert np.all(np.abs(xhat.var(axis=axes) - 1.0) < 1e-2)

    def test_constant_channel_guarded_by_epsilon(self):
        net = small_net([batchnorm(2)], input_shape=(2, 3, 3))
        images = np.zeros((10, 2, 3, 3))
        images[:, 1] = 5.0  # constant non-zero channel, zero variance
        stats = recompute_bn_stats(net, net.weights, images)
        net.bn_state = stats
        y, _ = forward(net, net.weights, images, "infer")
        assert np.isfinite(y).all()

    def test_empty_data_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            recompute_bn_stats(tiny_net, tiny_net.weights, np.zeros((0, 1, 8, 8)))


def test_network_copy_is_deep(tiny_net):
    dup = tiny_net.copy()
    dup.weights[0][0, 0, 0, 0] += 1.0
    assert tiny_net.weights[0][0, 0, 0, 0] != dup.weights[0][0, 0, 0, 0]
