"""Experiment driver: full-batch training with early stopping, multi-seed
runs, grid search, metric aggregation.

Training is full batch: each split is merged into one block-diagonal graph
once, so an epoch is a single forward/backward over sparse operators.
Determinism: everything downstream of (config, seed) is pure.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import AdamState, ParamStore, Tape, adam_step
from .datasets import Dataset
from .layers import GraphBatch, ModelConfig, init_model, make_batch, model_forward, model_loss

__all__ = [
    "RunResult",
    "TrainConfig",
    "aggregate",
    "batch_splits",
    "evaluate",
    "run_grid",
    "run_seeds",
    "train",
]


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-3
    weight_decay: float = 0.0
    max_epochs: int = 500
    patience: int = 100
    metric: str = "mse"  # mse | log10mse

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.patience > self.max_epochs:
            raise ValueError("patience cannot exceed max_epochs")
        if self.metric not in ("mse", "log10mse"):
            raise ValueError(f"unknown metric {self.metric!r}")


@dataclass
class RunResult:
    seed: int
    best_val: float
    test: float
    epochs_ran: int
    wall_time: float
    failed: bool = False

    def metric_value(self, metric: str, split: str = "test") -> float:
        mse = self.test if split == "test" else self.best_val
        if metric == "log10mse":
            return math.log10(mse) if mse > 0 else -float("inf")
        return mse


def batch_splits(ds: Dataset) -> dict[str, GraphBatch]:
    out = {}
    for name, samples in ds.splits().items():
        if not samples:
            continue
        out[name] = make_batch(
            [s.graph for s in samples],
            [s.target for s in samples],
            "graph" if ds.target_level == "graph" else "node",
            [s.mask for s in samples],
        )
    return out


def evaluate(params: ParamStore, cfg: ModelConfig, batch: GraphBatch) -> float:
    """MSE on a batch, no recording."""
    tape = Tape(record=False)
    pred = model_forward(tape, params, cfg, batch.ops, batch.graph.x, pool=batch.pool)
    loss = model_loss(tape, pred, batch.targets, batch.mask)
    return float(loss.value)


def train(
    model_cfg: ModelConfig,
    ds: Dataset,
    tc: TrainConfig,
    seed: int,
    batches: dict[str, GraphBatch] | None = None,
) -> tuple[RunResult, ParamStore]:
    """One training run; test is evaluated at the restored best-val checkpoint."""
    t0 = time.perf_counter()
    batches = batches if batches is not None else batch_splits(ds)
    params = init_model(model_cfg, seed)
    state = AdamState()
    tr = batches["train"]
    best_val = float("inf")
    best_snapshot = params.snapshot()
    since_best = 0
    epochs_ran = 0
    failed = False
    for epoch in range(tc.max_epochs):
        epochs_ran = epoch + 1
        params.zero_grads()
        tape = Tape()
        try:
            pred = model_forward(tape, params, model_cfg, tr.ops, tr.graph.x, pool=tr.pool)
            loss = model_loss(tape, pred, tr.targets, tr.mask)
        except FloatingPointError:
            failed = True
            break
        if not math.isfinite(float(loss.value)):
            failed = True
            break
        tape.backward(loss)
        adam_step(params, state, tc.lr, weight_decay=tc.weight_decay)
        try:
            val = evaluate(params, model_cfg, batches["val"])
        except FloatingPointError:
            failed = True
            break
        if not math.isfinite(val):
            failed = True
            break
        if val < best_val:
            best_val = val
            best_snapshot = params.snapshot()
            since_best = 0
        else:
            since_best += 1
            if since_best > tc.patience:
                break
    params.load(best_snapshot)
    if failed or not math.isfinite(best_val):
        result = RunResult(seed, float("inf"), float("inf"),
                           epochs_ran, time.perf_counter() - t0, failed=True)
        return result, params
    test = evaluate(params, model_cfg, batches["test"]) if "test" in batches else best_val
    result = RunResult(seed, best_val, test, epochs_ran, time.perf_counter() - t0)
    return result, params


def run_seeds(
    model_cfg: ModelConfig,
    ds: Dataset,
    tc: TrainConfig,
    seeds: list[int],
    batches: dict[str, GraphBatch] | None = None,
) -> list[RunResult]:
    batches = batches if batches is not None else batch_splits(ds)
    return [train(model_cfg, ds, tc, s, batches)[0] for s in seeds]


def aggregate(results: list[RunResult], metric: str = "mse") -> dict:
    """Mean and population std of val/test metric over runs."""
    if not results:
        raise ValueError("aggregate: no results")
    vals = np.array([r.metric_value(metric, "val") for r in results])
    tests = np.array([r.metric_value(metric, "test") for r in results])
    return {
        "metric": metric,
        "n_runs": len(results),
        "n_failed": sum(r.failed for r in results),
        "val_mean": float(vals.mean()),
        "val_std": float(vals.std()),  # population std
        "test_mean": float(tests.mean()),
        "test_std": float(tests.std()),
    }


def run_grid(
    base_cfg: ModelConfig,
    grid: dict[str, list],
    ds: Dataset,
    tc: TrainConfig,
    seeds: list[int],
    jobs: int = 1,
) -> dict:
    """Cartesian-product grid over ModelConfig fields; best cell by mean
    validation metric.  Returns {"cells": [...], "best": {...}}."""
    if not grid or any(not v for v in grid.values()):
        raise ValueError("run_grid: empty grid")
    keys = sorted(grid)
    combos = [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    batches = batch_splits(ds)

    def run_cell(overrides: dict) -> dict:
        cfg = ModelConfig(**{**base_cfg.to_dict(), **overrides})
        results = run_seeds(cfg, ds, tc, seeds, batches)
        agg = aggregate(results, tc.metric)
        return {"overrides": overrides, "config": cfg.to_dict(),
                "results": [asdict(r) for r in results], "aggregate": agg}
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_grid_cell_worker,
                                  [(base_cfg.to_dict(), ov, ds, tc, seeds) for ov in combos]))
    else:
        cells = [run_cell(ov) for ov in combos]
    best = min(cells, key=lambda c: (c["aggregate"]["val_mean"],
                                     json_key(c["overrides"])))
    return {"cells": cells, "best": best}


def json_key(obj: dict) -> str:
    import json

    return json.dumps(obj, sort_keys=True)


def _grid_cell_worker(payload):
    base_dict, overrides, ds, tc, seeds = payload
    cfg = ModelConfig(**{**base_dict, **overrides})
    results = run_seeds(cfg, ds, tc, seeds)
    agg = aggregate(results, tc.metric)
    return {"overrides": overrides, "config": cfg.to_dict(),
            "results": [asdict(r) for r in results], "aggregate": agg}
