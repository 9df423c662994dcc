#!/usr/bin/env python3
"""Desk-scale distortion sweeps: additive noise (sigma), multiplicative noise
(gamma), and the power exponent (beta), for a sign-trained net vs. an
unclipped plain-backprop control. Writes one CSV per sweep and, with --plot,
a PNG of the three curves.

    python scripts/desk_sweeps.py --seed 0 --out-dir sweeps/ --plot
"""

import argparse
import os
import sys

from projnet import (ClipPolicy, ProjectionSpec, SweepSpec, TrainConfig,
                     batchnorm, conv2d, dense, flatten, init_network, relu,
                     sweep, train)
from projnet.data import synthetic_splits

GRIDS = {
    "addnorm": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7),
    "multunif": (1.0, 0.8, 0.6, 0.4, 0.2, 0.1),
    "power": (0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0),
}


def desk_arch(classes=4):
    blocks = [(6, 1), (6, 2), (8, 1), (8, 2), (8, 1)]
    layers = []
    cin = 1
    for w, s in blocks:
        layers += [conv2d(3, 3, cin, w, stride=s, padding=1), batchnorm(w), relu()]
        cin = w
    return layers + [flatten(), dense(8 * 2 * 2, classes)]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--noise", type=float, default=0.8)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--out-dir", default="desk_sweeps")
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()

    data = synthetic_splits("stripes", 500, 250, 4, seed=args.seed,
                            noise=args.noise)
    nets = {}
    for name, proj, clip_on in [("sign-c", ProjectionSpec("sign"), True),
                                ("none-nc", ProjectionSpec("none"), False)]:
        net = init_network((1, 8, 8), desk_arch(), seed=args.seed)
        cfg = TrainConfig(optimizer="adam", learning_rate=0.01, batch_size=50,
                          epochs=args.epochs, projection=proj,
                          clip=ClipPolicy(enabled=clip_on), seed=args.seed,
                          eval_every=10_000)
        nets[name] = train(net, cfg, data).net
        print(f"trained {name}")

    os.makedirs(args.out_dir, exist_ok=True)
    curves = {}
    for kind, grid in GRIDS.items():
        for name, net in nets.items():
            rep = sweep(net, SweepSpec(kind=kind, grid=grid, trials=args.trials,
                                       seed=args.seed), data, network_id=name)
            path = os.path.join(args.out_dir, f"{name}_{kind}.csv")
            rep.to_csv(path)
            curves[(kind, name)] = (list(grid), [100 * m for m in rep.mean_errors])
            print(f"wrote {path}")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
        labels = {"addnorm": "additive noise scale",
                  "multunif": "multiplicative gamma",
                  "power": "power exponent"}
        for ax, kind in zip(axes, GRIDS):
            for name in nets:
                xs, ys = curves[(kind, name)]
                ax.plot(xs, ys, marker="o", label=name)
            ax.set_xlabel(labels[kind])
            ax.set_ylabel("test error (%)")
            if kind == "multunif":
                ax.invert_xaxis()  # smaller gamma = more noise
            ax.legend()
        fig.tight_layout()
        png = os.path.join(args.out_dir, "sweeps.png")
        fig.savefig(png, dpi=120)
        print(f"wrote {png}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
