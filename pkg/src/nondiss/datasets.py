"""Synthetic benchmark generation and JSON-lines serialization.

Two task families:

* graph transfer: copy a label across k hops on a line / ring / crossed ring.
  Source node carries feature 1, target 0, the rest U[0, 0.5); the regression
  target is the input with source and target values swapped.  Loss over all
  nodes.
* graph property prediction: diameter (graph-level), SSSP and eccentricity
  (node-level) on connected graphs of 25-35 nodes drawn from a fixed mixture
  of Erdos-Renyi, Barabasi-Albert, grid, ring and path graphs.  Targets are
  standardized with train-split statistics (stored in the dataset header).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .graphs import (
    Graph,
    barabasi_albert,
    crossed_ring_graph,
    diameter,
    eccentricity,
    erdos_renyi,
    graph_from_json,
    graph_to_json,
    grid_graph,
    is_connected,
    path_graph,
    ring_graph,
    sssp,
)

__all__ = [
    "Dataset",
    "Sample",
    "TRANSFER_KINDS",
    "PROPERTY_TASKS",
    "gen_graph_property",
    "gen_transfer",
    "load_dataset",
    "save_dataset",
]

TRANSFER_KINDS = ("transfer-line", "transfer-ring", "transfer-crossed-ring")
PROPERTY_TASKS = ("diameter", "sssp", "eccentricity")


@dataclass(frozen=True)
class Sample:
    graph: Graph
    target: np.ndarray  # per-node (n, d_t) or graph-level (d_t,)
    mask: np.ndarray | None = None


@dataclass
class Dataset:
    task: str
    seed: int
    train: list[Sample]
    val: list[Sample]
    test: list[Sample]
    target_level: str = "node"  # node | graph
    standardization: dict | None = None  # {"mean": float, "std": float}
    meta: dict = field(default_factory=dict)

    def splits(self):
        return {"train": self.train, "val": self.val, "test": self.test}


# ---------------------------------------------------------------------------
# graph transfer


def _transfer_topology(kind: str, k: int) -> tuple[Graph, int, int]:
    if kind == "transfer-line":
        if k < 1:
            raise ValueError("line transfer needs k >= 1")
        g = path_graph(k + 1)
        return g, 0, k
    n = 2 * k
    if kind == "transfer-ring":
        if n < 3:
            raise ValueError("ring transfer needs 2k >= 3")
        g = ring_graph(n)
    elif kind == "transfer-crossed-ring":
        g = crossed_ring_graph(n)
    else:
        raise ValueError(f"unknown transfer kind {kind!r}")
    return g, 0, n // 2


def gen_transfer(
    kind: str,
    k: int,
    n_train: int = 1000,
    n_val: int = 100,
    n_test: int = 100,
    seed: int = 0,
) -> Dataset:
    """Graph transfer dataset; deterministic in (parameters, seed)."""
    topo, source, target_node = _transfer_topology(kind, k)
    dist = int(sssp(topo, source)[target_node])

    def make(sample_seed: int) -> Sample:
        rng = np.random.default_rng(sample_seed)
        x = rng.uniform(0.0, 0.5, size=(topo.n, 1))
        x[source, 0] = 1.0
        x[target_node, 0] = 0.0
        y = x.copy()
        y[source, 0], y[target_node, 0] = x[target_node, 0], x[source, 0]
        return Sample(topo.with_features(x), y)

    counts = {"train": n_train, "val": n_val, "test": n_test}
    splits = {}
    idx = 0
    for name, cnt in counts.items():
        splits[name] = [make(seed + idx + i) for i in range(cnt)]
        idx += cnt
    return Dataset(
        task=f"{kind}-k{k}",
        seed=seed,
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        target_level="node",
        meta={"kind": kind, "k": k, "source": source, "target_node": target_node,
              "distance": dist},
    )


# ---------------------------------------------------------------------------
# graph property prediction

def _grid_shapes(lo: int, hi: int) -> list[tuple[int, int]]:
    shapes = []
    for m in range(2, hi + 1):
        for n in range(m, hi + 1):
            if lo <= m * n <= hi:
                shapes.append((m, n))
    return shapes


def _mixture_graph(rng: np.random.Generator, sizes: tuple[int, int]) -> tuple[Graph, str, int]:
    """One connected graph from the fixed family mixture, node count in
    [sizes[0], sizes[1]].  Returns (graph, family, resamples)."""
    lo, hi = sizes
    family = rng.choice(["er", "ba", "grid", "ring", "path"])
    resamples = 0
    if family == "er":
        while True:
            n = int(rng.integers(lo, hi + 1))
            p = float(rng.uniform(0.15, 0.35))
            g = erdos_renyi(n, p, int(rng.integers(0, 2**63)))
            if is_connected(g):
                return g, family, resamples
            resamples += 1
    if family == "ba":
        n = int(rng.integers(lo, hi + 1))
        k = int(rng.choice([2, 3]))
        return barabasi_albert(n, k, int(rng.integers(0, 2**63))), family, 0
    if family == "grid":
        shapes = _grid_shapes(lo, hi)
        m, n = shapes[int(rng.integers(len(shapes)))]
        return grid_graph(m, n), family, 0
    n = int(rng.integers(lo, hi + 1))
    if family == "ring":
        return ring_graph(n), family, 0
    return path_graph(n), family, 0


def _property_sample(
    task: str, rng: np.random.Generator, sizes: tuple[int, int]
) -> tuple[Sample, str, int]:
    g, family, resamples = _mixture_graph(rng, sizes)
    ident = rng.uniform(0.0, 1.0, size=(g.n, 1))
    if task == "sssp":
        source = int(rng.integers(g.n))
        indicator = np.zeros((g.n, 1))
        indicator[source, 0] = 1.0
        x = np.concatenate([ident, indicator], axis=1)
        y = sssp(g, source).astype(float).reshape(-1, 1)
        mask = y.reshape(-1) >= 0
    elif task == "eccentricity":
        x = ident
        y = eccentricity(g).astype(float).reshape(-1, 1)
        mask = y.reshape(-1) >= 0
    elif task == "diameter":
        x = ident
        y = np.array([float(diameter(g))])
        mask = None
    else:
        raise ValueError(f"unknown property task {task!r}")
    return Sample(g.with_features(x), y, mask), family, resamples


def gen_graph_property(
    task: str,
    n_train: int = 5120,
    n_val: int = 640,
    n_test: int = 1280,
    seed: int = 0,
    standardize: bool = True,
    sizes: tuple[int, int] = (25, 35),
) -> Dataset:
    if task not in PROPERTY_TASKS:
        raise ValueError(f"unknown property task {task!r}")
    if not 2 <= sizes[0] <= sizes[1]:
        raise ValueError("sizes must satisfy 2 <= lo <= hi")
    counts = {"train": n_train, "val": n_val, "test": n_test}
    splits: dict[str, list[Sample]] = {}
    families: dict[str, int] = {}
    total_resamples = 0
    idx = 0
    for name, cnt in counts.items():
        out = []
        for i in range(cnt):
            rng = np.random.default_rng((seed, idx + i))
            s, family, resamples = _property_sample(task, rng, sizes)
            out.append(s)
            families[family] = families.get(family, 0) + 1
            total_resamples += resamples
        splits[name] = out
        idx += cnt
    stats = None
    if standardize:
        vals = np.concatenate([s.target.reshape(-1) for s in splits["train"]])
        if any(s.mask is not None for s in splits["train"]):
            kept = np.concatenate(
                [s.target.reshape(-1)[s.mask if s.mask is not None else slice(None)]
                 for s in splits["train"]]
            )
            vals = kept
        mean, std = float(vals.mean()), float(vals.std())
        std = std if std > 0 else 1.0
        stats = {"mean": mean, "std": std}
        for split in splits.values():
            for i, s in enumerate(split):
                split[i] = Sample(s.graph, (s.target - mean) / std, s.mask)
    return Dataset(
        task=task,
        seed=seed,
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        target_level="graph" if task == "diameter" else "node",
        standardization=stats,
        meta={"families": families, "resamples": total_resamples,
              "sizes": list(sizes)},
    )


# ---------------------------------------------------------------------------
# serialization (JSON lines, header first)


def save_dataset(ds: Dataset, path: str) -> None:
    with open(path, "w") as fh:
        header = {
            "task": ds.task,
            "seed": ds.seed,
            "target_level": ds.target_level,
            "standardization": ds.standardization,
            "meta": ds.meta,
        }
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for split, samples in ds.splits().items():
            for s in samples:
                rec = {
                    "split": split,
                    "graph": graph_to_json(s.graph),
                    "target": s.target.tolist(),
                    "mask": s.mask.astype(int).tolist() if s.mask is not None else None,
                }
                fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


def load_dataset(path: str) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
        if not isinstance(header, dict) or "task" not in header:
            raise ValueError("missing header fields")
    except (json.JSONDecodeError, ValueError) as exc:
        raise ValueError(f"{path}:1: bad dataset header ({exc})") from exc
    splits: dict[str, list[Sample]] = {"train": [], "val": [], "test": []}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            sample = Sample(
                graph_from_json(rec["graph"]),
                np.array(rec["target"], dtype=float),
                np.array(rec["mask"], dtype=bool) if rec.get("mask") is not None else None,
            )
            splits[rec["split"]].append(sample)
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ValueError(f"{path}:{lineno}: bad sample record ({exc})") from exc
    return Dataset(
        task=header["task"],
        seed=int(header["seed"]),
        train=splits["train"],
        val=splits["val"],
        test=splits["test"],
        target_level=header.get("target_level", "node"),
        standardization=header.get("standardization"),
        meta=header.get("meta", {}),
    )
