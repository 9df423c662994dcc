"""Projected-weight training.

One step = project the high-precision weights, run forward/backward at the
projected values, apply the update (computed at the projection) to the
high-precision weights, then clip them to per-layer bounds. With the identity
projection and infinite bounds this is bit-identical to plain backprop.

Biases and batchnorm gamma/beta are trained normally but never projected and
never clipped. Clip bounds are c_k = f * init_std_k; milestone schedules
rescale f (and the learning rate) as a pure function of the step index, so a
step is reproducible from (config, step) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError
from .nn import (Network, backward, forward, one_vs_rest_targets,
                 square_hinge_loss)
from .projections import (ProjectionSpec, derive_rng, project_network,
                          resolve_beta, warn_if_misused)

# sub-stream tags so shuffling, projection draws, beta draws and evaluation
# never share an rng stream
STREAM_SHUFFLE = 1
STREAM_PROJ = 2
STREAM_BETA = 3
STREAM_EVAL = 4


def _check_schedule(schedule) -> tuple[tuple[int, float], ...]:
    schedule = tuple((int(s), float(m)) for s, m in schedule)
    steps = [s for s, _ in schedule]
    if any(b <= a for a, b in zip(steps, steps[1:])):
        raise ConfigError("schedule milestones must be strictly increasing")
    return schedule


@dataclass(frozen=True)
class ClipPolicy:
    """Per-layer weight bounds c_k = global_factor * init_std_k (infinite when
    disabled); `schedule` entries (step, multiplier) scale the global factor
    from that step onward."""

    enabled: bool = True
    global_factor: float = 0.5
    schedule: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.global_factor <= 0:
            raise ConfigError("clip global_factor must be > 0")
        object.__setattr__(self, "schedule", _check_schedule(self.schedule))

    def factor_at(self, step: int) -> float:
        f = self.global_factor
        for milestone, mult in self.schedule:
            if step >= milestone:
                f *= mult
        return f

    def bounds(self, net: Network, step: int) -> list[float | None]:
        if not self.enabled:
            return [np.inf if s is not None else None for s in net.init_std]
        f = self.factor_at(step)
        return [f * s if s is not None else None for s in net.init_std]


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    learning_rate: float = 0.003
    lr_schedule: tuple[tuple[int, float], ...] = ()
    batch_size: int = 50
    epochs: int = 1
    projection: ProjectionSpec = field(default_factory=ProjectionSpec)
    clip: ClipPolicy = field(default_factory=ClipPolicy)
    seed: int = 0
    deterministic: bool = True
    eval_every: int = 2

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        object.__setattr__(self, "lr_schedule", _check_schedule(self.lr_schedule))

    def lr_at(self, step: int) -> float:
        lr = self.learning_rate
        for milestone, mult in self.lr_schedule:
            if step >= milestone:
                lr *= mult
        return lr


def clip_weights(w: np.ndarray, c: float | None) -> np.ndarray:
    """Elementwise clamp to [-c, c]; infinite or None bound is the identity."""
    w = np.asarray(w)
    if c is None or np.isinf(c):
        return w.copy()
    return np.clip(w, -c, c)


def prox_linf_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Proximal operator of the indicator of the infinity-norm ball: the
    argmin of (1/2)||x - v||^2 over ||x||_inf <= radius, i.e. elementwise
    clamping. Kept separate from clip_weights so the equivalence is testable
    as a statement rather than a tautology."""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    v = np.asarray(v)
    return np.maximum(np.minimum(v, radius), -radius)


# --- trainable-parameter bookkeeping -------------------------------------

def _param_refs(net: Network) -> list[tuple[int, str]]:
    refs = []
    for i, spec in enumerate(net.layers):
        if spec.parametric:
            refs.append((i, "w"))
            refs.append((i, "b"))
        elif spec.kind == "batchnorm":
            refs.append((i, "gamma"))
            refs.append((i, "beta"))
    return refs


def _get_param(net: Network, ref: tuple[int, str]) -> np.ndarray:
    i, name = ref
    if name == "w":
        return net.weights[i]
    if name == "b":
        return net.biases[i]
    return getattr(net.bn_state[i], name)


def _set_param(net: Network, ref: tuple[int, str], value: np.ndarray) -> None:
    i, name = ref
    if name == "w":
        net.weights[i] = value
    elif name == "b":
        net.biases[i] = value
    else:
        setattr(net.bn_state[i], name, value)


def _gather_grads(net, weight_grads, bias_grads, bn_grads) -> list[np.ndarray]:
    grads = []
    for i, name in _param_refs(net):
        if name == "w":
            grads.append(weight_grads[i])
        elif name == "b":
            grads.append(bias_grads[i])
        elif name == "gamma":
            grads.append(bn_grads[i][0])
        else:
            grads.append(bn_grads[i][1])
    return grads


@dataclass
class AdamState:
    t: int
    m: list[np.ndarray]
    v: list[np.ndarray]

    def copy(self) -> "AdamState":
        return AdamState(self.t, [a.copy() for a in self.m], [a.copy() for a in self.v])


def init_opt_state(net: Network, optimizer: str) -> AdamState | None:
    if optimizer != "adam":
        return None
    shapes = [_get_param(net, r) for r in _param_refs(net)]
    return AdamState(0, [np.zeros_like(p) for p in shapes],
                     [np.zeros_like(p) for p in shapes])


def adam_update(opt_state: AdamState, grads: list[np.ndarray], lr: float,
                beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                ) -> tuple[AdamState, list[np.ndarray]]:
    """Bias-corrected adaptive-moment update. Returns the new state and the
    deltas to add to the parameters."""
    t = opt_state.t + 1
    new_m, new_v, deltas = [], [], []
    for m, v, g in zip(opt_state.m, opt_state.v, grads):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        deltas.append(-lr * mhat / (np.sqrt(vhat) + eps))
        new_m.append(m)
        new_v.append(v)
    return AdamState(t, new_m, new_v), deltas


def train_step(net: Network, batch: np.ndarray, targets: np.ndarray,
               cfg: TrainConfig, opt_state: AdamState | None, step: int,
               base_seed: int | None = None) -> tuple[float, AdamState | None]:
    """One projected training step, mutating `net` in place.

    Order: project -> forward (train mode) -> loss -> backward at the
    projection -> update the high-precision weights -> clip weights only.
    """
    seed = cfg.seed if base_seed is None else base_seed
    spec = resolve_beta(cfg.projection, derive_rng(seed, STREAM_BETA, step))
    eff = project_network(net, spec, (seed, STREAM_PROJ, step))
    logits, cache = forward(net, eff, batch, "train")
    loss, dlogits = square_hinge_loss(logits, targets)
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss at step {step}")
    wg, bg, bng = backward(net, cache, dlogits)
    grads = _gather_grads(net, wg, bg, bng)
    refs = _param_refs(net)
    lr = cfg.lr_at(step)
    if cfg.optimizer == "adam":
        opt_state, deltas = adam_update(opt_state, grads, lr)
        for ref, d in zip(refs, deltas):
            _set_param(net, ref, _get_param(net, ref) + d)
    else:
        for ref, g in zip(refs, grads):
            _set_param(net, ref, _get_param(net, ref) - lr * g)
    bounds = cfg.clip.bounds(net, step)
    for i in net.parametric_indices:
        net.weights[i] = clip_weights(net.weights[i], bounds[i])
    return loss, opt_state


@dataclass
class TrainHistory:
    """Evaluation-point records accumulated during training."""

    eval_labels: list[str] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)

    def add(self, epoch: int, iteration: int, loss: float, errors: dict[str, float]):
        self.rows.append({"epoch": epoch, "iteration": iteration,
                          "loss": loss, "errors": dict(errors)})

    def last_error(self, label: str) -> float:
        return self.rows[-1]["errors"][label]

    def csv_rows(self) -> tuple[list[str], list[list]]:
        header = ["epoch", "iteration", "loss"] + list(self.eval_labels)
        rows = [[r["epoch"], r["iteration"], repr(r["loss"])]
                + [repr(r["errors"][lab]) for lab in self.eval_labels]
                for r in self.rows]
        return header, rows


@dataclass
class TrainResult:
    net: Network
    history: TrainHistory
    opt_state: AdamState | None
    step: int


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    return derive_rng(seed, STREAM_SHUFFLE, epoch).permutation(n)


def train(net: Network, cfg: TrainConfig, data, eval_specs=(),
          start_step: int = 0, opt_state: AdamState | None = None,
          checkpoint_fn=None) -> TrainResult:
    """Run Algorithm-style training over shuffled minibatches.

    `data` is a Splits(train, test) pair. `eval_specs` are distortions to
    measure at the eval cadence (every cfg.eval_every epochs and at the final
    epoch), each via the harness protocol including its batch-norm recompute.
    Resume by passing start_step and the saved opt_state; the epoch shuffle is
    a pure function of (seed, epoch) so mid-run state reconstructs exactly.
    `checkpoint_fn(net, opt_state, step)` is invoked after each epoch when set.
    """
    from .harness import evaluate  # local import: harness depends on nn only

    warn_if_misused(cfg.projection, "train")
    net = net.copy()
    n = data.train.images.shape[0]
    if n == 0 or data.test.images.shape[0] == 0:
        raise ValueError("train/test splits must be non-empty")
    n_classes = _logit_width(net)
    steps_per_epoch = (n + cfg.batch_size - 1) // cfg.batch_size
    if opt_state is None and start_step == 0:
        opt_state = init_opt_state(net, cfg.optimizer)
    history = TrainHistory(eval_labels=[s.label() for s in eval_specs])

    if cfg.clip.enabled and start_step == 0:
        bounds = cfg.clip.bounds(net, 0)
        for i in net.parametric_indices:
            net.weights[i] = clip_weights(net.weights[i], bounds[i])

    step = start_step
    start_epoch = start_step // steps_per_epoch
    for epoch in range(start_epoch, cfg.epochs):
        perm = epoch_permutation(cfg.seed, epoch, n)
        first_batch = step - epoch * steps_per_epoch
        losses = []
        for b in range(first_batch, steps_per_epoch):
            idx = perm[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            batch = data.train.images[idx]
            targets = one_vs_rest_targets(data.train.labels[idx], n_classes)
            loss, opt_state = train_step(net, batch, targets, cfg, opt_state, step)
            losses.append(loss)
            step += 1
        done = epoch + 1
        if eval_specs and (done % max(cfg.eval_every, 1) == 0 or done == cfg.epochs):
            errors = {}
            for k, spec in enumerate(eval_specs):
                errors[spec.label()] = evaluate(
                    net, spec, data.test, data.train,
                    seed=(cfg.seed, STREAM_EVAL, done, k))
            history.add(done, step, float(np.mean(losses)), errors)
        if checkpoint_fn is not None:
            checkpoint_fn(net, opt_state, step)
    return TrainResult(net=net, history=history, opt_state=opt_state, step=step)


def _logit_width(net: Network) -> int:
    from .nn import output_shapes

    shapes = output_shapes(net.input_shape, net.layers)
    if not shapes or len(shapes[-1]) != 1:
        raise ConfigError("network must end in a flat logits layer")
    return shapes[-1][0]
