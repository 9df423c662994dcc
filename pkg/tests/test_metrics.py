"""Effective bits, weight gap, activation correlation, histograms."""

import numpy as np
import pytest

from projnet import (ProjectionSpec, activation_correlation,
                     addnorm_bits_report, dense, effective_bits,
                     init_network, relu, weight_gap, weight_histogram)
from projnet.metrics import diagnostics, pearson


class TestEffectiveBits:
    def test_ratio_one_is_half_bit(self):
        assert effective_bits(1.0, 1.0) == 0.5

    def test_ratio_three_is_one_bit(self):
        assert effective_bits(3.0, 1.0) == 1.0

    def test_zero_signal_zero_bits(self):
        assert effective_bits(0.0, 2.0) == 0.0

    def test_zero_noise_is_infinite(self):
        assert effective_bits(1.0, 0.0) == float("inf")

    def test_infinite_noise_is_zero_bits(self):
        assert effective_bits(1.0, float("inf")) == 0.0

    def test_monotone_in_snr(self):
        ratios = np.linspace(0.1, 10, 50)
        bits = [effective_bits(r, 1.0) for r in ratios]
        assert all(b2 > b1 for b1, b2 in zip(bits, bits[1:]))

    def test_inversion_at_0_68_bits(self):
        # bits = 0.68 <=> q_w/q_n = 2^1.36 - 1 ~= 1.567
        ratio = 2 ** (2 * 0.68) - 1
        assert ratio == pytest.approx(1.567, abs=1e-3)
        assert effective_bits(ratio, 1.0) == pytest.approx(0.68, abs=1e-12)

    def test_binary_weights_under_noise_closed_form(self):
        # +-alpha weights: q_w = alpha^2, q_n = (alpha*sigma)^2
        # bits = 0.5*log2(1 + 1/sigma^2), independent of alpha
        for alpha in (0.5, 1.0, 3.0):
            for sigma in (0.25, 0.55, 1.0):
                q_w = alpha ** 2
                q_n = (alpha * sigma) ** 2
                closed = 0.5 * np.log2(1 + 1 / sigma ** 2)
                assert effective_bits(q_w, q_n) == pytest.approx(closed, abs=1e-12)
        assert 0.5 * np.log2(1 + 1 / 0.55 ** 2) == pytest.approx(1.054, abs=1e-3)

    def test_negative_inputs_rejected(self):
        with pytest.raises(ValueError):
            effective_bits(-1.0, 1.0)
        with pytest.raises(ValueError):
            effective_bits(1.0, -1.0)


class TestBitsReport:
    def test_binary_net_matches_closed_form(self):
        net = init_network((4,), [dense(4, 3)], seed=0)
        net.weights[0] = np.where(net.weights[0] >= 0, 0.7, -0.7)
        sigma = 0.55
        report = addnorm_bits_report(net, sigma)
        closed = 0.5 * np.log2(1 + 1 / sigma ** 2)
        assert report.per_layer[0].bits == pytest.approx(closed, abs=1e-12)
        assert report.aggregate_bits == pytest.approx(closed, abs=1e-12)
        assert report.network_bits == pytest.approx(closed, abs=1e-12)

    def test_aggregate_is_count_weighted(self):
        net = init_network((4,), [dense(4, 4), relu(), dense(4, 2)], seed=1)
        report = addnorm_bits_report(net, 0.3)
        counts = [lb.count for lb in report.per_layer]
        bits = [lb.bits for lb in report.per_layer]
        expected = np.average(bits, weights=counts)
        assert report.aggregate_bits == pytest.approx(expected, rel=1e-12)

    def test_json_serializes_infinities(self, tmp_path):
        net = init_network((4,), [dense(4, 2)], seed=0)
        report = addnorm_bits_report(net, 0.0)  # q_n = 0 -> inf bits
        report.to_json(tmp_path / "bits.json")
        import json

        body = json.loads((tmp_path / "bits.json").read_text())
        assert body["per_layer"][0]["bits"] == "inf"


class TestWeightGap:
    def test_none_gap_is_zero(self, tiny_net):
        assert weight_gap(tiny_net, ProjectionSpec("none")) == \
            [0.0] * len(tiny_net.parametric_indices)

    def test_power_beta1_gap_is_zero(self, tiny_net):
        assert weight_gap(tiny_net, ProjectionSpec("power", beta=1.0)) == \
            [0.0] * len(tiny_net.parametric_indices)

    def test_already_binary_weights_have_zero_sign_gap(self):
        net = init_network((2,), [dense(2, 2)], seed=0)
        net.weights[0] = np.array([[0.4, -0.4], [-0.4, 0.4]])
        assert weight_gap(net, ProjectionSpec("sign")) == [0.0]

    def test_uniform_weights_sign_gap_approaches_half_alpha(self):
        # E|u - sign(u)| = 1/2 for u ~ U(-1, 1), scaled by alpha
        n = 200_000
        alpha = 2.0
        w = np.random.default_rng(8).uniform(-alpha, alpha, n)
        w[0] = alpha  # pin alpha exactly
        net = init_network((1,), [dense(1, n)], seed=0)
        net.weights[0] = w.reshape(1, n)
        gap = weight_gap(net, ProjectionSpec("sign"))[0]
        # E|u - sign(u)| for u~U(-1,1) = 1/2; SE of the mean of |.| ~ 0.5/sqrt(n)
        se = alpha * 0.5 / np.sqrt(n)
        assert abs(gap - alpha / 2) <= 4 * se

    def test_stochastic_spec_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            weight_gap(tiny_net, ProjectionSpec("stoch"))


class TestActivationCorrelation:
    def test_none_spec_gives_unit_correlation(self, tiny_net, tiny_data):
        corrs = activation_correlation(tiny_net, ProjectionSpec("none"),
                                       tiny_data.test.images[:32])
        assert all(c == pytest.approx(1.0, abs=1e-12) for c in corrs)

    def test_sign_on_random_net_decorrelates_deep_layers(self, tiny_net, tiny_data):
        corrs = activation_correlation(tiny_net, ProjectionSpec("sign"),
                                       tiny_data.test.images[:32])
        assert len(corrs) == 3  # one per relu
        assert corrs[-1] is not None and corrs[-1] < 1.0

    def test_constant_zero_activations_give_sentinel(self):
        net = init_network((2,), [dense(2, 2), relu()], seed=0)
        net.weights[0] = np.array([[1.0, 1.0], [1.0, 1.0]])
        net.biases[0] = np.array([-100.0, -100.0])  # relu always zero
        batch = np.abs(np.random.default_rng(0).standard_normal((8, 2)))
        corrs = activation_correlation(net, ProjectionSpec("none"), batch)
        assert corrs == [None]

    def test_symmetric_in_pass_order(self):
        a = np.random.default_rng(0).standard_normal(100)
        b = a + 0.3 * np.random.default_rng(1).standard_normal(100)
        assert pearson(a, b) == pytest.approx(pearson(b, a), rel=1e-15)

    def test_empty_batch_rejected(self, tiny_net):
        with pytest.raises(ValueError):
            activation_correlation(tiny_net, ProjectionSpec("none"),
                                   np.zeros((0, 1, 8, 8)))


class TestWeightHistogram:
    def test_single_repeated_value(self):
        edges, counts = weight_histogram(np.full(10, 0.3), bins=5)
        assert counts.sum() == 10
        assert np.count_nonzero(counts) == 1

    def test_two_values_two_bins(self):
        edges, counts = weight_histogram(np.array([-1.0, 1.0]), bins=2)
        np.testing.assert_array_equal(counts, [1, 1])

    def test_uniform_draws_evenly_binned(self):
        n = 100_000
        w = np.random.default_rng(3).uniform(0, 1, n)
        _, counts = weight_histogram(w, bins=10)
        assert counts.sum() == n
        assert np.all(np.abs(counts - n / 10) < 0.05 * n / 10)

    def test_bad_bins_rejected(self):
        with pytest.raises(ValueError):
            weight_histogram(np.ones(3), bins=0)


class TestDiagnostics:
    def test_per_layer_structure(self, tiny_net, tiny_data):
        diags = diagnostics(tiny_net, ProjectionSpec("sign"),
                            tiny_data.test.images[:16], bins=8)
        assert len(diags) == len(tiny_net.parametric_indices)
        for d in diags[:-1]:  # every conv feeds a relu
            assert d.activation_correlation is not None
        assert diags[-1].activation_correlation is None  # final dense has none
        for d in diags:
            assert sum(d.histogram_counts) == tiny_net.weights[d.index].size
