"""Robustness diagnostics.

Effective bits per weight is a signal-to-noise capacity estimate,
0.5 * log2(1 + Q_w / Q_n), with Q_w the second moment of the weights and Q_n
the second moment of the injected noise. For additive Gaussian noise scaled by
the per-layer alpha, Q_n = (alpha * sigma)^2 in closed form.

The per-layer weight gap and activation correlation quantify how far a
network's high-precision weights sit from a deterministic projection and how
similar the two forward passes remain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ioutil import write_json
from .nn import RELU, Network, recompute_bn_stats
from .projections import ProjectionSpec, layer_alpha, project, project_network


def effective_bits(q_w: float, q_n: float) -> float:
    """0.5 * log2(1 + q_w / q_n); +inf when q_n is 0."""
    if q_w < 0:
        raise ValueError("q_w must be >= 0")
    if q_n < 0:
        raise ValueError("q_n must be >= 0")
    if q_n == 0.0:
        return float("inf")
    return 0.5 * float(np.log2(1.0 + q_w / q_n))


@dataclass
class LayerBits:
    name: str
    count: int
    q_w: float
    q_n: float
    bits: float


@dataclass
class BitsReport:
    sigma: float
    per_layer: list[LayerBits]
    aggregate_bits: float
    network_q_w: float
    network_q_n: float
    network_bits: float

    def to_json(self, path, metadata: dict | None = None) -> None:
        write_json(path, {
            "schema_version": 1,
            "metadata": dict(metadata or {}),
            "sigma": self.sigma,
            "per_layer": [vars(lb) for lb in self.per_layer],
            "aggregate_bits": self.aggregate_bits,
            "network": {"q_w": self.network_q_w, "q_n": self.network_q_n,
                        "bits": self.network_bits},
        })


def addnorm_bits_report(net: Network, sigma: float) -> BitsReport:
    """Effective bits under additive Gaussian weight noise of scale
    alpha_k * sigma. Q_w is the measured per-layer mean of w^2; Q_n is the
    analytic noise second moment. The aggregate is the weight-count-weighted
    average of per-layer bits; the network block pools Q_w and Q_n over all
    weights first and takes bits of the ratio."""
    names = net.names
    per_layer: list[LayerBits] = []
    total_w2 = 0.0
    total_qn_weighted = 0.0
    total_count = 0
    for i in net.parametric_indices:
        w = net.weights[i]
        count = w.size
        q_w = float(np.mean(w * w))
        q_n = (layer_alpha(w) * sigma) ** 2
        per_layer.append(LayerBits(names[i], count, q_w, q_n,
                                   effective_bits(q_w, q_n)))
        total_w2 += q_w * count
        total_qn_weighted += q_n * count
        total_count += count
    agg = float(np.sum([lb.bits * lb.count for lb in per_layer]) / total_count) \
        if total_count else 0.0
    net_qw = total_w2 / total_count if total_count else 0.0
    net_qn = total_qn_weighted / total_count if total_count else 0.0
    return BitsReport(sigma=sigma, per_layer=per_layer, aggregate_bits=agg,
                      network_q_w=net_qw, network_q_n=net_qn,
                      network_bits=effective_bits(net_qw, net_qn))


def weight_gap(net: Network, spec: ProjectionSpec) -> list[float]:
    """Per parametric layer, mean |w - project(w)|. Deterministic specs only."""
    if spec.stochastic:
        raise ValueError("weight_gap needs a deterministic projection")
    gaps = []
    for i in net.parametric_indices:
        w = net.weights[i]
        gaps.append(float(np.mean(np.abs(w - project(w, spec)))))
    return gaps


def pearson(a: np.ndarray, b: np.ndarray) -> float | None:
    """Correlation of two flattened tensors; None when either side has zero
    variance (the undefined sentinel, never NaN)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        return None
    return float((da @ db) / np.sqrt(va * vb))


def activation_correlation(net: Network, spec: ProjectionSpec, batch: np.ndarray,
                           seed: int = 0) -> list[float | None]:
    """Per ReLU layer, Pearson correlation between the post-activation tensors
    of two infer-mode passes over `batch`: one with the stored weights, one
    with their projection. Each pass uses batch-norm statistics recomputed
    from `batch` under its own weight set."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.shape[0] == 0:
        raise ValueError("activation_correlation needs a non-empty batch")
    eff = project_network(net, spec, (seed,))
    acts_ref = _relu_activations(net, list(net.weights), batch)
    acts_proj = _relu_activations(net, eff, batch)
    return [pearson(a, b) for a, b in zip(acts_ref, acts_proj)]


def _relu_activations(net: Network, effective_weights, batch) -> list[np.ndarray]:
    work = net.copy()
    work.bn_state = recompute_bn_stats(net, effective_weights, batch)
    return _collect_relu(work, effective_weights, batch)


def _collect_relu(net: Network, effective_weights, batch) -> list[np.ndarray]:
    from .nn import _conv_forward, _per_channel  # shared kernels

    x = np.asarray(batch, dtype=np.float64)
    outs = []
    for i, spec in enumerate(net.layers):
        if spec.kind == "conv":
            x, _ = _conv_forward(x, effective_weights[i], net.biases[i],
                                 spec.stride, spec.padding)
        elif spec.kind == "dense":
            x = x @ effective_weights[i] + net.biases[i]
        elif spec.kind == "flatten":
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == "batchnorm":
            st = net.bn_state[i]
            invstd = 1.0 / np.sqrt(st.running_var + spec.eps)
            x = _per_channel(st.gamma, x.ndim) * (
                (x - _per_channel(st.running_mean, x.ndim)) * _per_channel(invstd, x.ndim)
            ) + _per_channel(st.beta, x.ndim)
        elif spec.kind == RELU:
            x = np.maximum(x, 0.0)
            outs.append(x)
    return outs


def weight_histogram(w: np.ndarray, bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width histogram over [min, max]; returns (edges, counts) with
    counts summing to the element count."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    w = np.asarray(w).ravel()
    counts, edges = np.histogram(w, bins=bins)
    return edges, counts


@dataclass
class LayerDiagnostics:
    index: int
    name: str
    weight_gap: float
    activation_correlation: float | None
    histogram_edges: list[float]
    histogram_counts: list[int]


def diagnostics(net: Network, spec: ProjectionSpec, batch: np.ndarray,
                bins: int = 64, seed: int = 0) -> list[LayerDiagnostics]:
    """Per parametric layer: weight gap vs `spec`, the correlation of the ReLU
    fed by that layer (None if no ReLU follows before the next parametric
    layer), and a weight histogram."""
    gaps = weight_gap(net, spec) if not spec.stochastic else None
    corrs = activation_correlation(net, spec, batch, seed=seed)
    names = net.names
    out = []
    relu_positions = [i for i, s in enumerate(net.layers) if s.kind == RELU]
    for ordinal, i in enumerate(net.parametric_indices):
        nxt = _next_parametric(net, i)
        corr = None
        for r_ord, rp in enumerate(relu_positions):
            if i < rp and (nxt is None or rp < nxt):
                corr = corrs[r_ord]
                break
        edges, counts = weight_histogram(net.weights[i], bins)
        gap = gaps[ordinal] if gaps is not None else float("nan")
        out.append(LayerDiagnostics(
            index=i, name=names[i], weight_gap=gap, activation_correlation=corr,
            histogram_edges=[float(e) for e in edges],
            histogram_counts=[int(c) for c in counts]))
    return out


def _next_parametric(net: Network, i: int) -> int | None:
    for j in net.parametric_indices:
        if j > i:
            return j
    return None
