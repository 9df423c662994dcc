"""Weight projections and distortions.

Each rule is a scalar function extended elementwise over a weight tensor,
parameterized by the per-layer normalization factor alpha = max|w| which maps
weights onto [-1, 1]. Deterministic rules: none, sign, round, power(beta).
Stochastic rules: stoch and stochm (training), addnorm and multunif (test-time
noise), stochm3 (three-state stochm that zeroes the middle half of the value
distribution with probability 0.5).

Glorot initialization lives here too because the recorded init std doubles as
the base unit for per-layer weight-clip bounds.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .nn import CONV, DENSE, LayerSpec

KINDS = ("none", "sign", "round", "power", "stoch", "stochm", "stochm3",
         "addnorm", "multunif")
DETERMINISTIC_KINDS = ("none", "sign", "round", "power")
TRAIN_ONLY_KINDS = ("stoch", "stochm", "stochm3")
TEST_ONLY_KINDS = ("addnorm", "multunif")


@dataclass(frozen=True)
class ProjectionSpec:
    """Tagged choice of projection with its parameter.

    beta_sampling=True marks a power projection whose exponent is drawn
    uniformly from [0, 2] once per minibatch by the trainer; `project` itself
    refuses such a spec until the exponent has been resolved.
    rng_stream optionally pins a base seed for callers that do not pass one.
    """

    kind: str = "none"
    beta: float | None = None
    gamma: float | None = None
    sigma: float | None = None
    beta_sampling: bool = False
    rng_stream: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown projection kind {self.kind!r}")
        if self.kind == "power":
            if self.beta_sampling:
                if self.beta is not None:
                    raise ValueError("power with beta_sampling must leave beta unset")
            elif self.beta is None or self.beta < 0:
                raise ValueError("power requires beta >= 0")
        elif self.beta is not None or self.beta_sampling:
            raise ValueError(f"beta only applies to power, not {self.kind}")
        if self.kind in ("stochm", "stochm3", "multunif"):
            if self.gamma is None or not (0.0 < self.gamma <= 1.0):
                raise ValueError(f"{self.kind} requires gamma in (0, 1]")
        elif self.gamma is not None:
            raise ValueError(f"gamma does not apply to {self.kind}")
        if self.kind == "addnorm":
            if self.sigma is None or self.sigma < 0:
                raise ValueError("addnorm requires sigma >= 0")
        elif self.sigma is not None:
            raise ValueError(f"sigma does not apply to {self.kind}")

    @property
    def stochastic(self) -> bool:
        return self.kind not in DETERMINISTIC_KINDS

    def label(self) -> str:
        return format_projection(self)


def parse_projection(text: str) -> ProjectionSpec:
    """Parse "kind [param=value]" strings: "sign", "power beta=0.5",
    "power beta=rand", "stochm gamma=0.5", "addnorm sigma=0.3", ..."""
    parts = text.strip().split()
    if not parts:
        raise ValueError("empty projection spec")
    kind = parts[0].lower()
    kwargs: dict = {}
    for tok in parts[1:]:
        if "=" not in tok:
            raise ValueError(f"bad projection parameter {tok!r} in {text!r}")
        key, val = tok.split("=", 1)
        if key not in ("beta", "gamma", "sigma"):
            raise ValueError(f"unknown projection parameter {key!r} in {text!r}")
        if key == "beta" and val == "rand":
            kwargs["beta_sampling"] = True
        else:
            kwargs[key] = float(val)
    return ProjectionSpec(kind, **kwargs)


def format_projection(spec: ProjectionSpec) -> str:
    if spec.kind == "power":
        return "power beta=rand" if spec.beta_sampling else f"power beta={spec.beta:g}"
    if spec.kind in ("stochm", "stochm3", "multunif"):
        return f"{spec.kind} gamma={spec.gamma:g}"
    if spec.kind == "addnorm":
        return f"addnorm sigma={spec.sigma:g}"
    return spec.kind


def warn_if_misused(spec: ProjectionSpec, context: str) -> None:
    """Table-1 Use column is advisory: warn (never error) when a test-only
    kind reaches the trainer or a train-only kind reaches the harness."""
    if context == "train" and spec.kind in TEST_ONLY_KINDS:
        warnings.warn(f"{spec.kind} is a test-time distortion; using it for training",
                      stacklevel=3)
    if context == "test" and spec.kind in TRAIN_ONLY_KINDS:
        warnings.warn(f"{spec.kind} is a training projection; using it as a distortion",
                      stacklevel=3)


def layer_alpha(w: np.ndarray) -> float:
    """Per-layer normalization factor: max absolute weight (0 for empty or
    all-zero tensors)."""
    w = np.asarray(w)
    return float(np.max(np.abs(w))) if w.size else 0.0


def _sign0(w: np.ndarray) -> np.ndarray:
    # sign(0) := +1 so the binary rule has exactly two states
    return np.where(w >= 0, 1.0, -1.0)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.floor(np.abs(x) + 0.5) * np.sign(x)


def _stochm_draw(w, alpha, gamma, rng):
    p = 0.5 * (w / alpha + 1.0)
    s = np.where(rng.random(w.shape) < p, 1.0, -1.0)
    u = rng.uniform(gamma, 1.0 / gamma, w.shape)
    return s * w * u


def project(w: np.ndarray, spec: ProjectionSpec,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply one projection elementwise. alpha is recomputed from `w` at every
    call. Stochastic kinds require `rng`; identical generator state gives
    bit-identical output."""
    w = np.asarray(w, dtype=np.float64)
    if spec.kind == "power" and spec.beta_sampling:
        raise ValueError("beta-sampling spec must be resolved to a concrete beta first")
    if spec.stochastic and rng is None:
        raise ValueError(f"{spec.kind} projection needs an rng")
    if spec.kind == "none":
        return w.copy()
    alpha = layer_alpha(w)
    if alpha == 0.0:
        # all-zero layer: every alpha-normalized rule maps to zero, no division
        return np.zeros_like(w)
    if spec.kind == "sign":
        return alpha * _sign0(w)
    if spec.kind == "round":
        return alpha * _round_half_away(w / alpha)
    if spec.kind == "power":
        if spec.beta == 1.0:
            return w.copy()  # exact identity; the normalized form double-rounds
        return alpha * np.abs(w / alpha) ** spec.beta * _sign0(w)
    if spec.kind == "stoch":
        p = 0.5 * (w / alpha + 1.0)
        return alpha * np.where(rng.random(w.shape) < p, 1.0, -1.0)
    if spec.kind == "stochm":
        return _stochm_draw(w, alpha, spec.gamma, rng)
    if spec.kind == "stochm3":
        return stochm3(w, spec.gamma, rng)
    if spec.kind == "addnorm":
        return w + rng.standard_normal(w.shape) * (alpha * spec.sigma)
    if spec.kind == "multunif":
        return w * rng.uniform(spec.gamma, 1.0 / spec.gamma, w.shape)
    raise ValueError(f"unknown projection kind {spec.kind!r}")


def stochm3(w: np.ndarray, gamma: float, rng: np.random.Generator) -> np.ndarray:
    """stochm, plus: weights strictly between the layer's 25th and 75th value
    percentiles are zeroed with probability 0.5 each. The stochm draw happens
    first, so an empty middle band reproduces stochm bit-for-bit."""
    w = np.asarray(w, dtype=np.float64)
    if w.size == 0:
        raise ValueError("stochm3 needs a non-empty tensor")
    alpha = layer_alpha(w)
    if alpha == 0.0:
        return np.zeros_like(w)
    out = _stochm_draw(w, alpha, gamma, rng)
    q25, q75 = np.percentile(w, [25.0, 75.0])
    middle = (w > q25) & (w < q75)
    drop = middle & (rng.random(w.shape) < 0.5)
    out[drop] = 0.0
    return out


def expected_projection(w: float, alpha: float, spec: ProjectionSpec) -> float:
    """Closed-form E[project(w)] for the stochastic training rules."""
    if spec.kind == "stoch":
        return float(w)
    if spec.kind == "stochm":
        return float((w * w / alpha) * (spec.gamma + 1.0 / spec.gamma) / 2.0)
    raise ValueError(f"no closed-form expectation for {spec.kind}")


def fan_in_out(spec: LayerSpec) -> tuple[int, int]:
    if spec.kind == CONV:
        return spec.kh * spec.kw * spec.in_channels, spec.kh * spec.kw * spec.out_channels
    if spec.kind == DENSE:
        return spec.in_features, spec.out_features
    raise ValueError(f"{spec.kind} has no weights to initialize")


def glorot_init(spec: LayerSpec, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Normal draws with std sqrt(2 / (fan_in + fan_out)); returns the weight
    tensor and the formula std (recorded on the network, used for clip bounds)."""
    fin, fout = fan_in_out(spec)
    std = float(np.sqrt(2.0 / (fin + fout)))
    if spec.kind == CONV:
        shape = (spec.out_channels, spec.in_channels, spec.kh, spec.kw)
    else:
        shape = (spec.in_features, spec.out_features)
    return rng.standard_normal(shape) * std, std


def derive_rng(*parts: int) -> np.random.Generator:
    """Independent stream keyed by a tuple of integers (seed, layer, step, ...)."""
    return np.random.default_rng(tuple(int(p) for p in parts))


def project_network(net, spec: ProjectionSpec, seed_parts: tuple[int, ...] | int,
                    ) -> list[np.ndarray | None]:
    """One projected weight set for a whole network. Each layer gets its own
    rng stream derived from (seed_parts..., layer_index), so results do not
    depend on evaluation order."""
    if isinstance(seed_parts, (int, np.integer)):
        seed_parts = (int(seed_parts),)
    eff: list[np.ndarray | None] = [None] * len(net.layers)
    for i in net.parametric_indices:
        rng = derive_rng(*seed_parts, i) if spec.stochastic else None
        eff[i] = project(net.weights[i], spec, rng)
    return eff


def init_network(input_shape, layers, seed: int = 0):
    """Build a Network: Glorot weights, zero biases, identity batchnorm state,
    per-layer init std recorded. Layer shape-chain is validated first."""
    from .nn import BatchNormState, Network, output_shapes

    layers = list(layers)
    output_shapes(tuple(input_shape), layers)  # raises ConfigError on mismatch
    net = Network(input_shape=tuple(input_shape), layers=layers)
    for i, spec in enumerate(layers):
        w = b = None
        bn = None
        std = None
        if spec.parametric:
            w, std = glorot_init(spec, derive_rng(seed, i))
            b = np.zeros(spec.out_channels if spec.kind == CONV else spec.out_features)
        elif spec.kind == "batchnorm":
            c = spec.channels
            bn = BatchNormState(np.ones(c), np.zeros(c), np.zeros(c), np.ones(c))
        net.weights.append(w)
        net.biases.append(b)
        net.bn_state.append(bn)
        net.init_std.append(std)
    return net


def resolve_beta(spec: ProjectionSpec, rng: np.random.Generator) -> ProjectionSpec:
    """Materialize a beta-sampling power spec: one beta ~ U[0, 2] shared by all
    layers for the current minibatch."""
    if spec.kind == "power" and spec.beta_sampling:
        return replace(spec, beta=float(rng.uniform(0.0, 2.0)), beta_sampling=False)
    return spec
