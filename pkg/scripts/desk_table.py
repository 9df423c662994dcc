#!/usr/bin/env python3
"""Desk-scale analog of the projection-vs-clipping error table.

Trains the six named setups (none/sign/stoch/power/stochm x clip settings) on
the synthetic stripes task and prints test error under the none / sign / round
distortions for each. Runs in a few minutes on one CPU core.

    python scripts/desk_table.py --seed 0 --epochs 30 --out table.csv
"""

import argparse
import sys
import time

from projnet import (ClipPolicy, ProjectionSpec, TrainConfig, batchnorm,
                     conv2d, dense, evaluate, flatten, init_network,
                     parse_projection, relu, train)
from projnet.data import synthetic_splits
from projnet.ioutil import atomic_write_text, csv_text

SETUPS = [
    ("tr-none-nc", "none", False),
    ("tr-none-c", "none", True),
    ("tr-sign-c", "sign", True),
    ("tr-stoch-c", "stoch", True),
    ("tr-power-c", "power beta=rand", True),
    ("tr-stochm-c", "stochm gamma=0.5", True),
]

TESTS = ["none", "sign", "round"]


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
    ap.add_argument("--n-train", type=int, default=500)
    ap.add_argument("--n-test", type=int, default=250)
    ap.add_argument("--out", help="also write the table as CSV")
    args = ap.parse_args()

    data = synthetic_splits("stripes", args.n_train, args.n_test, 4,
                            seed=args.seed, noise=args.noise)
    rows = []
    print(f"{'network':<12}" + "".join(f"{'te-' + t:>10}" for t in TESTS))
    for name, proj, clip_on in SETUPS:
        t0 = time.time()
        net = init_network((1, 8, 8), desk_arch(), seed=args.seed)
        cfg = TrainConfig(optimizer="adam", learning_rate=0.01, batch_size=50,
                          epochs=args.epochs, projection=parse_projection(proj),
                          clip=ClipPolicy(enabled=clip_on), seed=args.seed,
                          eval_every=10_000)
        result = train(net, cfg, data)
        errs = [100 * evaluate(result.net, ProjectionSpec(t), data.test,
                               data.train, seed=args.seed)
                for t in TESTS]
        rows.append([name] + [f"{e:.2f}" for e in errs])
        print(f"{name:<12}" + "".join(f"{e:>9.2f}%" for e in errs)
              + f"   ({time.time() - t0:.0f}s)")
    if args.out:
        atomic_write_text(args.out, csv_text(
            ["network"] + [f"te_{t}" for t in TESTS], rows,
            metadata={"seed": args.seed, "epochs": args.epochs,
                      "noise": args.noise}))
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
