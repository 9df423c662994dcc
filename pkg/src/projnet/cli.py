"""Command-line surface.

Subcommands: train, evaluate, sweep, inspect, bits. Every run artifact (CSV,
JSON, checkpoint) carries the seed and config hash so results can be re-run
exactly. Exit codes: 0 ok, 1 usage/config error, 2 data/format error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (ExperimentConfig, config_hash, parse_config, preset,
                     serialize_config, PRESETS)
from .errors import ConfigError, FormatError, NumericError
from .harness import SweepSpec, evaluate, sweep
from .ioutil import atomic_write_text, csv_text, parse_grid, write_json
from .metrics import addnorm_bits_report, diagnostics
from .projections import parse_projection
from .trainer import train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> _Parser:
    p = _Parser(prog="projnet",
                description="Train and probe convnets with projected weights")
    sub = p.add_subparsers(dest="command", required=True)

    def global_flags(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--deterministic", action="store_true", default=None)
        sp.add_argument("--out-dir", default=None)

    tr = sub.add_parser("train", help="train per config, write checkpoint + history CSV")
    tr.add_argument("--config", help="TOML experiment config")
    tr.add_argument("--preset", help=f"named setup: {', '.join(PRESETS)}")
    tr.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config key, e.g. train.epochs=10")
    tr.add_argument("--resume", help="checkpoint to continue from")
    tr.add_argument("--checkpoint-every", type=int, default=0, metavar="EPOCHS",
                    help="also write epoch_N.ckpt every N epochs")
    global_flags(tr)

    ev = sub.add_parser("evaluate", help="test error under one distortion")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--spec", required=True, help='e.g. "sign", "addnorm sigma=0.3"')
    ev.add_argument("--out", help="write JSON here instead of stdout")
    global_flags(ev)

    sw = sub.add_parser("sweep", help="distortion parameter sweep")
    sw.add_argument("--checkpoint", required=True)
    sw.add_argument("--kind", required=True)
    sw.add_argument("--grid", required=True, help='"start:stop:count" or "a,b,c"')
    sw.add_argument("--trials", type=int, default=None)
    global_flags(sw)

    ins = sub.add_parser("inspect", help="per-layer diagnostics + weight histograms")
    ins.add_argument("--checkpoint", required=True)
    ins.add_argument("--spec", default="sign")
    ins.add_argument("--bins", type=int, default=64)
    global_flags(ins)

    bi = sub.add_parser("bits", help="effective bits under additive weight noise")
    bi.add_argument("--checkpoint", required=True)
    bi.add_argument("--sigma", type=float, required=True)
    bi.add_argument("--out", help="write JSON here instead of stdout")
    global_flags(bi)
    return p


def _load_experiment(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("pass either --config or --preset, not both")
    if args.config:
        with open(args.config) as f:
            cfg = parse_config(f.read())
    elif args.preset:
        cfg = preset(args.preset)
    else:
        raise ConfigError("train needs --config or --preset")
    text = serialize_config(cfg)
    for ov in args.set:
        if "=" not in ov:
            raise ConfigError(f"--set needs KEY=VALUE, got {ov!r}")
        text = _override(text, *ov.split("=", 1))
    cfg = parse_config(text)
    if args.seed is not None:
        cfg = _reparse(cfg, "seed", args.seed)
    if args.out_dir is not None:
        cfg = _reparse(cfg, "out_dir", f'"{args.out_dir}"')
    if args.deterministic:
        cfg = _reparse(cfg, "train.deterministic", "true")
    return cfg


def _override(text: str, dotted: str, value: str) -> str:
    # overrides are applied textually so the one validator sees the result
    parts = dotted.strip().split(".")
    if len(parts) == 1:
        section, key = None, parts[0]
    elif len(parts) == 2:
        section, key = parts
    else:
        raise ConfigError(f"override key {dotted!r} nests too deep")
    out, in_section, done = [], section is None, False
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.startswith("["):
            if not done and in_section and section is not None:
                out.append(f"{key} = {value}")
                done = True
            in_section = stripped == f"[{section}]"
        elif not done and in_section and stripped.split("=")[0].strip() == key:
            out.append(f"{key} = {value}")
            done = True
            continue
        out.append(line)
    if not done:
        if section is None:
            out.insert(0, f"{key} = {value}")
        elif in_section:  # section was last in the file, key absent
            out.append(f"{key} = {value}")
        else:
            out += [f"[{section}]", f"{key} = {value}"]
    return "\n".join(out) + "\n"


def _reparse(cfg: ExperimentConfig, dotted: str, value) -> ExperimentConfig:
    return parse_config(_override(serialize_config(cfg), dotted, str(value)))


def _checkpoint_data(args):
    ck = load_checkpoint(args.checkpoint)
    if not ck.config_text:
        raise ConfigError(f"{args.checkpoint} has no embedded config; cannot "
                          "rebuild its dataset")
    cfg = parse_config(ck.config_text)
    if args.seed is not None:
        cfg = _reparse(cfg, "seed", args.seed)
    return ck, cfg, cfg.build_data()


def cmd_train(args) -> int:
    cfg = _load_experiment(args)
    text = serialize_config(cfg)
    net = cfg.build_network()
    data = cfg.build_data()
    start_step, opt_state = 0, None
    if args.resume:
        ck = load_checkpoint(args.resume)
        net, start_step, opt_state = ck.net, ck.rng_step, ck.opt_state
    os.makedirs(cfg.out_dir, exist_ok=True)
    checkpoint_fn = None
    if args.checkpoint_every:
        steps_per_epoch = (data.train.n + cfg.train.batch_size - 1) \
            // cfg.train.batch_size

        def checkpoint_fn(ck_net, ck_opt, ck_step):
            epoch = ck_step // steps_per_epoch
            if epoch % args.checkpoint_every == 0:
                save_checkpoint(ck_net,
                                os.path.join(cfg.out_dir, f"epoch_{epoch}.ckpt"),
                                config_text=text, rng_step=ck_step,
                                opt_state=ck_opt, dtype=np.float64)

    result = train(net, cfg.train, data, eval_specs=cfg.eval_projections(),
                   start_step=start_step, opt_state=opt_state,
                   checkpoint_fn=checkpoint_fn)
    meta = {"seed": cfg.seed, "config_hash": config_hash(cfg)}
    # f64 + optimizer state so the run is resumable bit-exactly
    save_checkpoint(result.net, os.path.join(cfg.out_dir, "final.ckpt"),
                    config_text=text, rng_step=result.step,
                    opt_state=result.opt_state, dtype=np.float64)
    header, rows = result.history.csv_rows()
    atomic_write_text(os.path.join(cfg.out_dir, "history.csv"),
                      csv_text(header, rows, metadata=meta))
    atomic_write_text(os.path.join(cfg.out_dir, "config.toml"), text)
    print(f"trained {cfg.train.epochs} epochs ({result.step} steps); "
          f"artifacts in {cfg.out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    ck, cfg, data = _checkpoint_data(args)
    spec = parse_projection(args.spec)
    err = evaluate(ck.net, spec, data.test, data.train, seed=cfg.seed)
    body = {"schema_version": 1, "seed": cfg.seed, "config_hash": config_hash(cfg),
            "spec": spec.label(), "error": err}
    if args.out:
        write_json(args.out, body)
    else:
        import json

        print(json.dumps(body, indent=2))
    return 0


def cmd_sweep(args) -> int:
    ck, cfg, data = _checkpoint_data(args)
    sw = SweepSpec(kind=args.kind, grid=tuple(parse_grid(args.grid)),
                   trials=args.trials, seed=cfg.seed)
    report = sweep(ck.net, sw, data, network_id=config_hash(cfg))
    report.metadata["config_hash"] = config_hash(cfg)
    out_dir = args.out_dir or cfg.out_dir
    base = os.path.join(out_dir, f"sweep_{args.kind}")
    report.to_csv(base + ".csv")
    report.to_json(base + ".json")
    print(f"wrote {base}.csv and {base}.json")
    return 0


def cmd_inspect(args) -> int:
    ck, cfg, data = _checkpoint_data(args)
    spec = parse_projection(args.spec)
    batch = data.test.images[:min(256, data.test.n)]
    diags = diagnostics(ck.net, spec, batch, bins=args.bins, seed=cfg.seed)
    out_dir = args.out_dir or cfg.out_dir
    meta = {"seed": cfg.seed, "config_hash": config_hash(cfg), "spec": spec.label()}
    write_json(os.path.join(out_dir, "diagnostics.json"), {
        "schema_version": 1, "metadata": meta,
        "layers": [{
            "index": d.index, "name": d.name, "weight_gap": d.weight_gap,
            "activation_correlation": d.activation_correlation,
        } for d in diags]})
    for d in diags:
        rows = [[d.histogram_edges[i], d.histogram_edges[i + 1], c]
                for i, c in enumerate(d.histogram_counts)]
        atomic_write_text(os.path.join(out_dir, f"hist_{d.name}.csv"),
                          csv_text(["bin_left", "bin_right", "count"], rows,
                                   metadata=meta))
    print(f"wrote diagnostics.json and per-layer histograms in {out_dir}")
    return 0


def cmd_bits(args) -> int:
    ck = load_checkpoint(args.checkpoint)
    meta = {}
    if ck.config_text:
        cfg = parse_config(ck.config_text)
        meta = {"seed": cfg.seed, "config_hash": config_hash(cfg)}
    report = addnorm_bits_report(ck.net, args.sigma)
    if args.out:
        report.to_json(args.out, metadata=meta)
    else:
        import json

        from .ioutil import sanitize_json

        print(json.dumps(sanitize_json({
            "sigma": report.sigma, "aggregate_bits": report.aggregate_bits,
            "network_bits": report.network_bits,
            "per_layer": [vars(lb) for lb in report.per_layer]}), indent=2))
    return 0


_COMMANDS = {"train": cmd_train, "evaluate": cmd_evaluate, "sweep": cmd_sweep,
             "inspect": cmd_inspect, "bits": cmd_bits}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (FormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
