"""Test-time distortion evaluation.

Protocol per measurement: draw one distorted weight set, recompute batch-norm
statistics on the training split under those weights, then measure
classification error on the evaluation split with infer-mode batch norm.
Biases and batch-norm parameters are never distorted. Sweeps repeat this over
a parameter grid with independent rng streams per (grid point, trial).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .ioutil import atomic_write_text, csv_text
from .nn import Network, forward, recompute_bn_stats
from .projections import (DETERMINISTIC_KINDS, ProjectionSpec, derive_rng,
                          project_network, warn_if_misused)


@dataclass(frozen=True)
class Splits:
    train: "Dataset"  # noqa: F821 - projnet.data.Dataset
    test: "Dataset"  # noqa: F821


@dataclass(frozen=True)
class SweepSpec:
    """Grid of distortion parameters to evaluate, `trials` repeats per point
    (None = 5 for stochastic kinds, 1 for deterministic)."""

    kind: str
    grid: tuple[float, ...]
    trials: int | None = None
    seed: int = 0
    split: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if not self.grid:
            raise ValueError("sweep grid must be non-empty")
        if self.trials is not None and self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.split not in ("test", "train"):
            raise ValueError(f"unknown split {self.split!r}")

    def resolved_trials(self) -> int:
        if self.trials is not None:
            return self.trials
        return 1 if self.kind in DETERMINISTIC_KINDS else 5

    def spec_for(self, value: float) -> ProjectionSpec:
        if self.kind == "addnorm":
            return ProjectionSpec("addnorm", sigma=value)
        if self.kind in ("multunif", "stochm", "stochm3"):
            return ProjectionSpec(self.kind, gamma=value)
        if self.kind == "power":
            return ProjectionSpec("power", beta=value)
        # parameterless kinds ignore the grid value
        return ProjectionSpec(self.kind)


@dataclass
class SweepReport:
    parameter_values: list[float]
    mean_errors: list[float]
    std_errors: list[float]
    trials: int
    metadata: dict = field(default_factory=dict)

    def rows(self):
        for v, m, s in zip(self.parameter_values, self.mean_errors, self.std_errors):
            yield v, m, s, self.trials

    def to_csv(self, path) -> None:
        atomic_write_text(path, csv_text(
            ["parameter", "mean_error", "std_error", "trials"],
            [[repr(v), repr(m), repr(s), t] for v, m, s, t in self.rows()],
            metadata=self.metadata))

    def to_json(self, path) -> None:
        body = {
            "schema_version": 1,
            "metadata": dict(self.metadata),
            "trials": self.trials,
            "points": [{"parameter": v, "mean_error": m, "std_error": s}
                       for v, m, s, _ in self.rows()],
        }
        atomic_write_text(path, json.dumps(body, indent=2) + "\n")


def classification_error(net: Network, effective_weights, ds,
                         batch_size: int = 256) -> float:
    """Fraction of argmax mispredictions under infer-mode batch norm."""
    wrong = 0
    n = ds.images.shape[0]
    for lo in range(0, n, batch_size):
        logits, _ = forward(net, effective_weights, ds.images[lo:lo + batch_size],
                            "infer")
        pred = np.argmax(logits, axis=1)
        wrong += int(np.sum(pred != ds.labels[lo:lo + batch_size]))
    return wrong / n


def evaluate(net: Network, spec: ProjectionSpec, test_data, train_data,
             seed=0, recompute_bn: bool = True, batch_size: int = 256) -> float:
    """Test error under one drawn distortion.

    The draw is fixed for the whole pass (one distorted network per call);
    batch-norm statistics are recomputed on `train_data` under the distorted
    weights before measuring. Deterministic given (net, spec, seed).
    """
    if test_data.images.shape[0] == 0 or train_data.images.shape[0] == 0:
        raise ValueError("evaluate needs non-empty train and test splits")
    warn_if_misused(spec, "test")
    seed_parts = (seed,) if isinstance(seed, (int, np.integer)) else tuple(seed)
    eff = project_network(net, spec, seed_parts)
    work = net
    if recompute_bn:
        work = net.copy()
        work.bn_state = recompute_bn_stats(net, eff, train_data.images,
                                           batch_size=batch_size)
    return classification_error(work, eff, test_data, batch_size=batch_size)


def sweep(net: Network, sw: SweepSpec, data: Splits,
          network_id: str = "") -> SweepReport:
    """Mean/std test error over `sw.trials` independent draws at each grid
    value. Trial seeds derive from (sweep seed, grid index, trial index)."""
    trials = sw.resolved_trials()
    eval_ds = data.test if sw.split == "test" else data.train
    means, stds = [], []
    for gi, value in enumerate(sw.grid):
        spec = sw.spec_for(value)
        errs = [evaluate(net, spec, eval_ds, data.train,
                         seed=_trial_seed(sw.seed, gi, t))
                for t in range(trials)]
        means.append(float(np.mean(errs)))
        stds.append(float(np.std(errs)))
    return SweepReport(
        parameter_values=list(sw.grid), mean_errors=means, std_errors=stds,
        trials=trials,
        metadata={"network": network_id, "kind": sw.kind, "seed": sw.seed,
                  "split": sw.split})


def _trial_seed(seed: int, grid_index: int, trial: int) -> int:
    return int(derive_rng(seed, 7, grid_index, trial).integers(0, 2 ** 63))
