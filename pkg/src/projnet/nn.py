"""Dense-tensor layer kernels with exact analytical gradients.

Layers: Conv2D (direct summation, explicit stride/zero-padding), Dense, ReLU,
BatchNorm (over channel axis, batch stats in train mode / running stats in
infer mode), Flatten. Loss: multi-class square hinge with +-1 one-vs-rest
target codes. All compute is float64; checkpoints may downcast separately.

Activations are NCHW. Conv weights are (out_ch, in_ch, kh, kw); dense weights
are (in_features, out_features) so the forward is ``x @ w + b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError

CONV = "conv"
DENSE = "dense"
RELU = "relu"
BATCHNORM = "batchnorm"
FLATTEN = "flatten"

PARAMETRIC_KINDS = (CONV, DENSE)


@dataclass(frozen=True)
class LayerSpec:
    """One layer in the network; fields beyond `kind` apply per kind only."""

    kind: str
    kh: int = 0
    kw: int = 0
    in_channels: int = 0
    out_channels: int = 0
    stride: int = 1
    padding: int = 0
    in_features: int = 0
    out_features: int = 0
    channels: int = 0
    eps: float = 1e-5
    momentum: float = 0.9

    @property
    def parametric(self) -> bool:
        return self.kind in PARAMETRIC_KINDS


def conv2d(kh: int, kw: int, in_channels: int, out_channels: int,
           stride: int = 1, padding: int = 0) -> LayerSpec:
    return LayerSpec(CONV, kh=kh, kw=kw, in_channels=in_channels,
                     out_channels=out_channels, stride=stride, padding=padding)


def dense(in_features: int, out_features: int) -> LayerSpec:
    return LayerSpec(DENSE, in_features=in_features, out_features=out_features)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


def batchnorm(channels: int, eps: float = 1e-5, momentum: float = 0.9) -> LayerSpec:
    return LayerSpec(BATCHNORM, channels=channels, eps=eps, momentum=momentum)


def flatten() -> LayerSpec:
    return LayerSpec(FLATTEN)


@dataclass
class BatchNormState:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    def copy(self) -> "BatchNormState":
        return BatchNormState(self.gamma.copy(), self.beta.copy(),
                              self.running_mean.copy(), self.running_var.copy())


def output_shapes(input_shape: tuple[int, ...], layers: list[LayerSpec]) -> list[tuple[int, ...]]:
    """Per-layer output shapes (excluding batch dim); raises ConfigError if the
    declared layer parameters do not chain consistently."""
    shapes = []
    cur = tuple(input_shape)
    for i, spec in enumerate(layers):
        if spec.kind == CONV:
            if len(cur) != 3:
                raise ConfigError(f"layer {i}: conv needs (C,H,W) input, got {cur}")
            c, h, w = cur
            if c != spec.in_channels:
                raise ConfigError(
                    f"layer {i}: conv expects {spec.in_channels} input channels, got {c}")
            oh = (h + 2 * spec.padding - spec.kh) // spec.stride + 1
            ow = (w + 2 * spec.padding - spec.kw) // spec.stride + 1
            if oh < 1 or ow < 1:
                raise ConfigError(f"layer {i}: conv output would be empty ({oh}x{ow})")
            cur = (spec.out_channels, oh, ow)
        elif spec.kind == DENSE:
            if len(cur) != 1:
                raise ConfigError(f"layer {i}: dense needs flat input, got {cur}")
            if cur[0] != spec.in_features:
                raise ConfigError(
                    f"layer {i}: dense expects {spec.in_features} features, got {cur[0]}")
            cur = (spec.out_features,)
        elif spec.kind == BATCHNORM:
            if cur[0] != spec.channels:
                raise ConfigError(
                    f"layer {i}: batchnorm expects {spec.channels} channels, got {cur[0]}")
        elif spec.kind == FLATTEN:
            cur = (int(np.prod(cur)),)
        elif spec.kind == RELU:
            pass
        else:
            raise ConfigError(f"layer {i}: unknown kind {spec.kind!r}")
        shapes.append(cur)
    return shapes


def layer_names(layers: list[LayerSpec]) -> list[str]:
    """Stable per-layer names ("conv1", "dense1", "batchnorm2", ...)."""
    counts: dict[str, int] = {}
    names = []
    for spec in layers:
        counts[spec.kind] = counts.get(spec.kind, 0) + 1
        names.append(f"{spec.kind}{counts[spec.kind]}")
    return names


@dataclass
class Network:
    """Layer list plus per-layer parameters.

    `weights`/`biases`/`init_std` have one entry per layer (None for
    non-parametric layers); `bn_state` likewise (None off batchnorm layers).
    """

    input_shape: tuple[int, ...]
    layers: list[LayerSpec]
    weights: list[np.ndarray | None] = field(default_factory=list)
    biases: list[np.ndarray | None] = field(default_factory=list)
    bn_state: list[BatchNormState | None] = field(default_factory=list)
    init_std: list[float | None] = field(default_factory=list)

    @property
    def parametric_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if s.parametric]

    @property
    def bn_indices(self) -> list[int]:
        return [i for i, s in enumerate(self.layers) if s.kind == BATCHNORM]

    @property
    def names(self) -> list[str]:
        return layer_names(self.layers)

    def copy(self) -> "Network":
        return Network(
            input_shape=tuple(self.input_shape),
            layers=list(self.layers),
            weights=[None if w is None else w.copy() for w in self.weights],
            biases=[None if b is None else b.copy() for b in self.biases],
            bn_state=[None if s is None else s.copy() for s in self.bn_state],
            init_std=list(self.init_std),
        )


def _bn_axes(x: np.ndarray) -> tuple[int, ...]:
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _per_channel(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape((1, -1)) if ndim == 2 else v.reshape((1, -1, 1, 1))


@dataclass
class _LayerCache:
    kind: str
    data: dict


@dataclass
class ForwardCache:
    mode: str
    logits_shape: tuple[int, ...]
    per_layer: list[_LayerCache]


def _check_finite(x: np.ndarray, layer_index: int) -> None:
    if not np.isfinite(x).all():
        raise NumericError(f"non-finite activation out of layer {layer_index}")


def forward(net: Network, effective_weights: list[np.ndarray | None],
            batch: np.ndarray, mode: str = "infer") -> tuple[np.ndarray, ForwardCache]:
    """Forward pass under `effective_weights` (one entry per layer, None for
    non-parametric layers). In train mode BatchNorm normalizes with batch
    statistics and updates the running statistics in place; in infer mode it
    uses the stored running statistics and mutates nothing.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    x = np.asarray(batch, dtype=np.float64)
    if x.shape[1:] != tuple(net.input_shape):
        raise ConfigError(
            f"batch shape {x.shape[1:]} does not match network input {net.input_shape}")
    caches: list[_LayerCache] = []
    for i, spec in enumerate(net.layers):
        if spec.kind == CONV:
            w = effective_weights[i]
            b = net.biases[i]
            if w is None or w.shape != net.weights[i].shape:
                raise ConfigError(f"layer {i}: effective weight missing or mis-shaped")
            y, xp = _conv_forward(x, w, b, spec.stride, spec.padding)
            caches.append(_LayerCache(CONV, {"xp": xp, "w": w, "x_shape": x.shape}))
            x = y
        elif spec.kind == DENSE:
            w = effective_weights[i]
            b = net.biases[i]
            if w is None or w.shape != net.weights[i].shape:
                raise ConfigError(f"layer {i}: effective weight missing or mis-shaped")
            caches.append(_LayerCache(DENSE, {"x": x, "w": w}))
            x = x @ w + b
        elif spec.kind == RELU:
            mask = x > 0
            caches.append(_LayerCache(RELU, {"mask": mask}))
            x = np.where(mask, x, 0.0)
        elif spec.kind == FLATTEN:
            caches.append(_LayerCache(FLATTEN, {"shape": x.shape}))
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == BATCHNORM:
            st = net.bn_state[i]
            axes = _bn_axes(x)
            if mode == "train":
                mean = x.mean(axis=axes)
                var = x.var(axis=axes)
                invstd = 1.0 / np.sqrt(var + spec.eps)
                xhat = (x - _per_channel(mean, x.ndim)) * _per_channel(invstd, x.ndim)
                m = spec.momentum
                st.running_mean[:] = m * st.running_mean + (1.0 - m) * mean
                st.running_var[:] = m * st.running_var + (1.0 - m) * var
                count = x.size // x.shape[1]
                caches.append(_LayerCache(BATCHNORM, {
                    "xhat": xhat, "invstd": invstd, "gamma": st.gamma, "count": count}))
            else:
                invstd = 1.0 / np.sqrt(st.running_var + spec.eps)
                xhat = (x - _per_channel(st.running_mean, x.ndim)) * _per_channel(invstd, x.ndim)
                caches.append(_LayerCache(BATCHNORM, {}))
            x = _per_channel(st.gamma, x.ndim) * xhat + _per_channel(st.beta, x.ndim)
        _check_finite(x, i)
    return x, ForwardCache(mode, x.shape, caches)


def _conv_forward(x, w, b, stride, pad):
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    y = np.zeros((n, cout, oh, ow))
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride]
            y += np.einsum("ncij,oc->noij", xs, w[:, :, u, v])
    y += b[None, :, None, None]
    return y, xp


def backward(net: Network, cache: ForwardCache, loss_grad: np.ndarray):
    """Backpropagate `loss_grad` (d loss / d logits) through a train-mode
    forward cache. Returns (weight_grads, bias_grads, bn_grads), each a
    per-layer list; bn_grads entries are (dgamma, dbeta)."""
    if cache.mode != "train":
        raise ValueError("backward requires a cache from a train-mode forward")
    if len(cache.per_layer) != len(net.layers):
        raise ValueError("cache does not match this network's layer list")
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.shape != cache.logits_shape:
        raise ValueError(
            f"loss_grad shape {g.shape} does not match logits {cache.logits_shape}")
    weight_grads: list[np.ndarray | None] = [None] * len(net.layers)
    bias_grads: list[np.ndarray | None] = [None] * len(net.layers)
    bn_grads: list[tuple[np.ndarray, np.ndarray] | None] = [None] * len(net.layers)
    for i in range(len(net.layers) - 1, -1, -1):
        spec = net.layers[i]
        lc = cache.per_layer[i]
        if lc.kind != spec.kind:
            raise ValueError("cache does not match this network's layer list")
        if spec.kind == CONV:
            g, dw, db = _conv_backward(g, lc.data["xp"], lc.data["w"],
                                       spec.stride, spec.padding, lc.data["x_shape"])
            weight_grads[i], bias_grads[i] = dw, db
        elif spec.kind == DENSE:
            x, w = lc.data["x"], lc.data["w"]
            weight_grads[i] = x.T @ g
            bias_grads[i] = g.sum(axis=0)
            g = g @ w.T
        elif spec.kind == RELU:
            g = np.where(lc.data["mask"], g, 0.0)
        elif spec.kind == FLATTEN:
            g = g.reshape(lc.data["shape"])
        elif spec.kind == BATCHNORM:
            xhat = lc.data["xhat"]
            invstd = lc.data["invstd"]
            gamma = lc.data["gamma"]
            count = lc.data["count"]
            axes = _bn_axes(g)
            dgamma = (g * xhat).sum(axis=axes)
            dbeta = g.sum(axis=axes)
            bn_grads[i] = (dgamma, dbeta)
            dxhat = g * _per_channel(gamma, g.ndim)
            s1 = _per_channel(dxhat.sum(axis=axes), g.ndim)
            s2 = _per_channel((dxhat * xhat).sum(axis=axes), g.ndim)
            g = (_per_channel(invstd, g.ndim) / count) * (count * dxhat - s1 - xhat * s2)
    return weight_grads, bias_grads, bn_grads


def _conv_backward(g, xp, w, stride, pad, x_shape):
    n, cin, h, wd = x_shape
    cout, _, kh, kw = w.shape
    oh, ow = g.shape[2], g.shape[3]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for u in range(kh):
        for v in range(kw):
            xs = xp[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride]
            dw[:, :, u, v] = np.einsum("noij,ncij->oc", g, xs)
            dxp[:, :, u:u + stride * oh:stride, v:v + stride * ow:stride] += \
                np.einsum("noij,oc->ncij", g, w[:, :, u, v])
    db = g.sum(axis=(0, 2, 3))
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw, db


def one_vs_rest_targets(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Integer class labels -> (N, n_classes) array of +-1 codes."""
    labels = np.asarray(labels)
    t = -np.ones((labels.shape[0], n_classes))
    t[np.arange(labels.shape[0]), labels] = 1.0
    return t


def square_hinge_loss(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean over batch and classes of max(0, 1 - t*o)^2, with its exact
    gradient w.r.t. the logits."""
    o = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if o.shape != t.shape:
        raise ValueError(f"logits shape {o.shape} != targets shape {t.shape}")
    if not np.isin(t, (-1.0, 1.0)).all():
        raise ValueError("targets must be +-1 one-vs-rest codes")
    margin = np.maximum(0.0, 1.0 - t * o)
    loss = float(np.mean(margin ** 2))
    grad = (-2.0 / o.size) * t * margin
    return loss, grad


def recompute_bn_stats(net: Network, effective_weights: list[np.ndarray | None],
                       images: np.ndarray, batch_size: int = 256) -> list[BatchNormState | None]:
    """Replace every BatchNorm running mean/variance with the exact per-channel
    moments of its pre-normalization input over `images`, computed under
    `effective_weights`. Earlier layers run in infer mode with their own
    already-recomputed statistics, so each layer's moments are self-consistent
    with the final inference network. Gamma/beta are untouched.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.shape[0] == 0:
        raise ValueError("recompute_bn_stats needs a non-empty dataset")
    work = net.copy()
    for bn_i in work.bn_indices:
        spec = work.layers[bn_i]
        total = 0
        s1 = np.zeros(spec.channels)
        s2 = np.zeros(spec.channels)
        for lo in range(0, images.shape[0], batch_size):
            x = _forward_prefix(work, effective_weights, images[lo:lo + batch_size], bn_i)
            axes = _bn_axes(x)
            s1 += x.sum(axis=axes)
            s2 += (x * x).sum(axis=axes)
            total += x.size // x.shape[1]
        mean = s1 / total
        var = s2 / total - mean ** 2
        st = work.bn_state[bn_i]
        st.running_mean = mean
        st.running_var = np.maximum(var, 0.0)
    return work.bn_state


def _forward_prefix(net: Network, effective_weights, batch, stop_layer: int) -> np.ndarray:
    """Infer-mode activations entering layer `stop_layer`."""
    x = np.asarray(batch, dtype=np.float64)
    for i, spec in enumerate(net.layers[:stop_layer]):
        if spec.kind == CONV:
            x, _ = _conv_forward(x, effective_weights[i], net.biases[i],
                                 spec.stride, spec.padding)
        elif spec.kind == DENSE:
            x = x @ effective_weights[i] + net.biases[i]
        elif spec.kind == RELU:
            x = np.maximum(x, 0.0)
        elif spec.kind == FLATTEN:
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == BATCHNORM:
            st = net.bn_state[i]
            invstd = 1.0 / np.sqrt(st.running_var + spec.eps)
            xhat = (x - _per_channel(st.running_mean, x.ndim)) * _per_channel(invstd, x.ndim)
            x = _per_channel(st.gamma, x.ndim) * xhat + _per_channel(st.beta, x.ndim)
    return x
