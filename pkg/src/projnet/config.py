"""Experiment configuration: TOML text with one section per concern.

Layers use a compact string grammar, validated while chaining shapes:

    "conv 3x3 8 s2 p1"   3x3 kernel, 8 output channels, stride 2, pad 1
    "dense 4"            4 output features (input width inferred)
    "bn" / "relu" / "flatten"

In/out widths are inferred from the running shape, so a config never states
the same dimension twice. Unknown keys anywhere are rejected. parse and
serialize round-trip exactly. Named presets encode the standard training
setups (projection x clipping) with the published defaults.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .harness import Splits, SweepSpec
from .nn import batchnorm, conv2d, dense, flatten, relu
from .projections import ProjectionSpec, format_projection, parse_projection
from .trainer import ClipPolicy, TrainConfig


@dataclass(frozen=True)
class DataConfig:
    kind: str = "synthetic"  # synthetic | cifar10
    path: str = ""
    synthetic_kind: str = "blobs"
    n_train: int = 500
    n_test: int = 250
    classes: int = 4
    size: int = 8
    channels: int = 1
    noise: float = 0.25
    gcn: bool = False
    whiten_path: str = ""

    def __post_init__(self):
        if self.kind not in ("synthetic", "cifar10"):
            raise ConfigError(f"data.kind must be synthetic or cifar10, got {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    out_dir: str = "out"
    data: DataConfig = field(default_factory=DataConfig)
    input_shape: tuple[int, int, int] = (1, 8, 8)
    layers: tuple[str, ...] = ()
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_specs: tuple[str, ...] = ("none",)
    sweep: SweepSpec | None = None

    def build_network(self, seed: int | None = None):
        from .projections import init_network

        specs = parse_layers(self.layers, self.input_shape)
        return init_network(self.input_shape, specs, seed=self.seed if seed is None else seed)

    def build_data(self) -> Splits:
        from .data import cifar10_splits, gcn_normalize, synthetic_splits

        if self.data.kind == "synthetic":
            splits = synthetic_splits(self.data.synthetic_kind, self.data.n_train,
                                      self.data.n_test, self.data.classes,
                                      seed=self.seed, size=self.data.size,
                                      noise=self.data.noise,
                                      channels=self.data.channels)
        else:
            splits = cifar10_splits(self.data.path)
        if self.data.gcn:
            splits = Splits(gcn_normalize(splits.train), gcn_normalize(splits.test))
        if self.data.whiten_path:
            import numpy as np

            from .data import apply_whitening

            m = np.load(self.data.whiten_path)
            splits = Splits(apply_whitening(splits.train, m),
                            apply_whitening(splits.test, m))
        return splits

    def eval_projections(self) -> list[ProjectionSpec]:
        return [parse_projection(s) for s in self.eval_specs]


def parse_layers(layer_strings, input_shape) -> list:
    """Layer DSL -> LayerSpec list with inferred in-widths."""
    cur = tuple(input_shape)
    out = []
    for k, text in enumerate(layer_strings):
        toks = text.strip().lower().split()
        if not toks:
            raise ConfigError(f"layers[{k}]: empty layer string")
        head = toks[0]
        if head == "conv":
            if len(cur) != 3:
                raise ConfigError(f"layers[{k}]: conv needs (C,H,W) input, have {cur}")
            m = re.fullmatch(r"(\d+)x(\d+)", toks[1]) if len(toks) > 1 else None
            if m is None or len(toks) < 3:
                raise ConfigError(f"layers[{k}]: expected 'conv KHxKW OUT [sN] [pN]'")
            kh, kw = int(m.group(1)), int(m.group(2))
            cout = int(toks[2])
            stride, pad = 1, 0
            for tok in toks[3:]:
                if tok.startswith("s"):
                    stride = int(tok[1:])
                elif tok.startswith("p"):
                    pad = int(tok[1:])
                else:
                    raise ConfigError(f"layers[{k}]: unknown conv option {tok!r}")
            spec = conv2d(kh, kw, cur[0], cout, stride=stride, padding=pad)
            oh = (cur[1] + 2 * pad - kh) // stride + 1
            ow = (cur[2] + 2 * pad - kw) // stride + 1
            cur = (cout, oh, ow)
        elif head == "dense":
            if len(cur) != 1:
                raise ConfigError(f"layers[{k}]: dense needs a flattened input, have {cur}")
            if len(toks) != 2:
                raise ConfigError(f"layers[{k}]: expected 'dense OUT'")
            spec = dense(cur[0], int(toks[1]))
            cur = (int(toks[1]),)
        elif head == "bn":
            spec = batchnorm(cur[0])
        elif head == "relu":
            spec = relu()
        elif head == "flatten":
            spec = flatten()
            cur = (int(cur[0]) if len(cur) == 1 else cur[0] * cur[1] * cur[2],)
        else:
            raise ConfigError(f"layers[{k}]: unknown layer {head!r}")
        out.append(spec)
    return out


# --- TOML parse / serialize ------------------------------------------------

_TOP_KEYS = {"seed", "out_dir"}
_DATA_KEYS = {"kind", "path", "synthetic_kind", "n_train", "n_test", "classes",
              "size", "channels", "noise", "gcn", "whiten_path"}
_ARCH_KEYS = {"input", "layers"}
_TRAIN_KEYS = {"optimizer", "learning_rate", "lr_schedule", "batch_size",
               "epochs", "projection", "eval_every", "deterministic"}
_CLIP_KEYS = {"enabled", "global_factor", "schedule"}
_EVAL_KEYS = {"specs"}
_SWEEP_KEYS = {"kind", "grid", "trials", "seed", "split"}
_SECTIONS = {"data", "architecture", "train", "clip", "eval", "sweep"}


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config syntax error: {e}") from e
    top = {k: v for k, v in doc.items() if not isinstance(v, dict)}
    sections = {k: v for k, v in doc.items() if isinstance(v, dict)}
    _reject_unknown(top, _TOP_KEYS, "top level")
    _reject_unknown(sections, _SECTIONS, "top level")

    data_d = sections.get("data", {})
    _reject_unknown(data_d, _DATA_KEYS, "[data]")
    data = DataConfig(**data_d)

    arch = sections.get("architecture", {})
    _reject_unknown(arch, _ARCH_KEYS, "[architecture]")
    input_shape = tuple(int(x) for x in arch.get("input", (1, 8, 8)))
    layer_strings = tuple(str(s) for s in arch.get("layers", ()))

    train_d = dict(sections.get("train", {}))
    _reject_unknown(train_d, _TRAIN_KEYS, "[train]")
    if "projection" in train_d:
        train_d["projection"] = parse_projection(train_d["projection"])
    if "lr_schedule" in train_d:
        train_d["lr_schedule"] = tuple((int(s), float(m)) for s, m in train_d["lr_schedule"])
    clip_d = dict(sections.get("clip", {}))
    _reject_unknown(clip_d, _CLIP_KEYS, "[clip]")
    if "schedule" in clip_d:
        clip_d["schedule"] = tuple((int(s), float(m)) for s, m in clip_d["schedule"])
    try:
        train = TrainConfig(clip=ClipPolicy(**clip_d), seed=int(doc.get("seed", 0)),
                            **train_d)
    except TypeError as e:
        raise ConfigError(f"bad [train]/[clip] value: {e}") from e

    eval_d = sections.get("eval", {})
    _reject_unknown(eval_d, _EVAL_KEYS, "[eval]")
    eval_specs = tuple(str(s) for s in eval_d.get("specs", ("none",)))
    for s in eval_specs:
        if parse_projection(s).beta_sampling:  # also validates the string
            raise ConfigError(f"eval spec {s!r} needs a concrete beta")

    sweep = None
    if "sweep" in sections:
        sweep_d = dict(sections["sweep"])
        _reject_unknown(sweep_d, _SWEEP_KEYS, "[sweep]")
        sweep_d["grid"] = tuple(float(g) for g in sweep_d.get("grid", ()))
        sweep = SweepSpec(**sweep_d)

    return ExperimentConfig(
        seed=int(doc.get("seed", 0)), out_dir=str(doc.get("out_dir", "out")),
        data=data, input_shape=input_shape, layers=layer_strings, train=train,
        eval_specs=eval_specs, sweep=sweep)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v)}")


def serialize_config(cfg: ExperimentConfig) -> str:
    lines = [f"seed = {cfg.seed}", f"out_dir = {_toml_value(cfg.out_dir)}", ""]
    d = cfg.data
    lines += ["[data]", f"kind = {_toml_value(d.kind)}", f"path = {_toml_value(d.path)}",
              f"synthetic_kind = {_toml_value(d.synthetic_kind)}",
              f"n_train = {d.n_train}", f"n_test = {d.n_test}",
              f"classes = {d.classes}", f"size = {d.size}",
              f"channels = {d.channels}",
              f"noise = {_toml_value(d.noise)}", f"gcn = {_toml_value(d.gcn)}",
              f"whiten_path = {_toml_value(d.whiten_path)}", ""]
    lines += ["[architecture]",
              f"input = {_toml_value(list(cfg.input_shape))}",
              f"layers = {_toml_value(list(cfg.layers))}", ""]
    t = cfg.train
    lines += ["[train]", f"optimizer = {_toml_value(t.optimizer)}",
              f"learning_rate = {_toml_value(t.learning_rate)}",
              f"lr_schedule = {_toml_value([[s, m] for s, m in t.lr_schedule])}",
              f"batch_size = {t.batch_size}", f"epochs = {t.epochs}",
              f"projection = {_toml_value(format_projection(t.projection))}",
              f"eval_every = {t.eval_every}",
              f"deterministic = {_toml_value(t.deterministic)}", ""]
    c = t.clip
    lines += ["[clip]", f"enabled = {_toml_value(c.enabled)}",
              f"global_factor = {_toml_value(c.global_factor)}",
              f"schedule = {_toml_value([[s, m] for s, m in c.schedule])}", ""]
    lines += ["[eval]", f"specs = {_toml_value(list(cfg.eval_specs))}", ""]
    if cfg.sweep is not None:
        sw = cfg.sweep
        lines += ["[sweep]", f"kind = {_toml_value(sw.kind)}",
                  f"grid = {_toml_value(list(sw.grid))}"]
        if sw.trials is not None:
            lines.append(f"trials = {sw.trials}")
        lines += [f"seed = {sw.seed}", f"split = {_toml_value(sw.split)}", ""]
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()[:12]


# --- presets ----------------------------------------------------------------

CIFAR_LAYERS = (
    "conv 3x3 64 p1", "bn", "relu",
    "conv 3x3 64 s2 p1", "bn", "relu",
    "conv 3x3 128 p1", "bn", "relu",
    "conv 3x3 128 s2 p1", "bn", "relu",
    "conv 3x3 256 p1", "bn", "relu",
    "conv 3x3 256 s2 p1", "bn", "relu",
    "flatten",
    "dense 1024", "bn", "relu",
    "dense 10",
)

_PRESET_PROJECTIONS = {
    "tr-none-nc": ("none", False),
    "tr-none-c": ("none", True),
    "tr-sign-c": ("sign", True),
    "tr-stoch-c": ("stoch", True),
    "tr-power-c": ("power beta=rand", True),
    "tr-stochm-c": ("stochm gamma=0.5", True),
    "tr-stochm3-c": ("stochm3 gamma=0.5", True),
}


def preset(name: str) -> ExperimentConfig:
    """Named training setups: projection x clipping with the published
    defaults (adam, lr 0.003, batch 50, 500 epochs, clip factor 0.5,
    evaluation every 2 epochs, CIFAR-scale 6-conv + 2-dense net)."""
    key = name.lower()
    if key not in _PRESET_PROJECTIONS:
        raise ConfigError(f"unknown preset {name!r}; have "
                          f"{', '.join(sorted(_PRESET_PROJECTIONS))}")
    proj, clipped = _PRESET_PROJECTIONS[key]
    return ExperimentConfig(
        seed=0, out_dir=f"runs/{key}",
        data=DataConfig(kind="cifar10", path="data/cifar10", gcn=True,
                        classes=10, size=32, channels=3),
        input_shape=(3, 32, 32), layers=CIFAR_LAYERS,
        train=TrainConfig(optimizer="adam", learning_rate=0.003, batch_size=50,
                          epochs=500, projection=parse_projection(proj),
                          clip=ClipPolicy(enabled=clipped), eval_every=2),
        eval_specs=("none", "sign", "round"),
    )


PRESETS = tuple(sorted(_PRESET_PROJECTIONS))
