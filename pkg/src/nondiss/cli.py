"""Command-line surface: gen-data | train | grid | diagnose | report.

Exit codes: 0 success, 2 usage error (bad flags, bad config, missing files),
3 numeric failure (diverged run, non-convergence).  The ``NONDISS_SEED``
environment variable supplies the default seed.  Outputs are pure functions
of (flags, input files, seeds); no wall-clock values enter CSV files.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from .autodiff import Tape, Tensor, forward_mlp
from .datasets import (
    PROPERTY_TASKS,
    TRANSFER_KINDS,
    gen_graph_property,
    gen_transfer,
    load_dataset,
)
from .diagnostics import (
    assemble_swan_jacobian,
    bsm_trace,
    energy_trace,
    fd_field_jacobian,
    hamiltonian_field,
    jacobian_drift,
    max_re_eig,
    propagation_rate,
)
from .layers import (
    MODEL_KINDS,
    ModelConfig,
    build_operators,
    load_checkpoint,
    save_checkpoint,
)
from .linalg import antisymmetrize, eig_general
from .training import TrainConfig, aggregate, batch_splits, run_grid, train

__all__ = ["main"]


class UsageError(Exception):
    pass


class NumericFailure(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get("NONDISS_SEED", "0"))


def _parse_ints(text: str, expect: int | None = None) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v != ""]
    except ValueError as exc:
        raise UsageError(f"bad integer list {text!r}") from exc
    if expect is not None and len(vals) != expect:
        raise UsageError(f"expected {expect} comma-separated integers, got {text!r}")
    return vals


# ---------------------------------------------------------------------------
# config files

MODEL_CFG_KEYS = {f.name for f in fields(ModelConfig)} - {"kind", "d_in", "d_out", "task"}
TRAIN_CFG_KEYS = {f.name for f in fields(TrainConfig)}


def load_run_config(path: str | None) -> tuple[dict, dict, dict]:
    """Strict JSON config: {"model": {...}, "train": {...}, "grid": {...}}.

    Unknown keys anywhere are usage errors so config files map 1:1 to the
    hyperparameter records.
    """
    if path is None:
        return {}, {}, {}
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    unknown_top = set(obj) - {"model", "train", "grid"}
    if unknown_top:
        raise UsageError(f"{path}: unknown config sections {sorted(unknown_top)}")
    model = obj.get("model", {})
    tcfg = obj.get("train", {})
    grid = obj.get("grid", {})
    bad = set(model) - MODEL_CFG_KEYS
    if bad:
        raise UsageError(f"{path}: unknown model keys {sorted(bad)}")
    bad = set(tcfg) - TRAIN_CFG_KEYS
    if bad:
        raise UsageError(f"{path}: unknown train keys {sorted(bad)}")
    bad = set(grid) - MODEL_CFG_KEYS
    if bad:
        raise UsageError(f"{path}: unknown grid keys {sorted(bad)}")
    return model, tcfg, grid


# ---------------------------------------------------------------------------
# gen-data


def cmd_gen_data(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    counts = _parse_ints(args.counts, 3) if args.counts else None
    if args.task in TRANSFER_KINDS:
        kw = {}
        if counts:
            kw = {"n_train": counts[0], "n_val": counts[1], "n_test": counts[2]}
        try:
            ds = gen_transfer(args.task, args.k, seed=seed, **kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    elif args.task in PROPERTY_TASKS:
        kw = {}
        if counts:
            kw = {"n_train": counts[0], "n_val": counts[1], "n_test": counts[2]}
        if args.sizes:
            lo, hi = _parse_ints(args.sizes, 2)
            kw["sizes"] = (lo, hi)
        try:
            ds = gen_graph_property(args.task, seed=seed, **kw)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        raise UsageError(f"unknown task {args.task!r}")
    from .datasets import save_dataset

    save_dataset(ds, args.out)
    sizes = {}
    for split in ds.splits().values():
        for s in split:
            sizes[s.graph.n] = sizes.get(s.graph.n, 0) + 1
    total = sum(sizes.values())
    print(f"wrote {total} samples to {args.out} (task={ds.task}, seed={seed})")
    print("node-size histogram: " + ", ".join(f"{n}:{c}" for n, c in sorted(sizes.items())))
    return 0


# ---------------------------------------------------------------------------
# train / grid


def _infer_dims(ds) -> tuple[int, int, str]:
    sample = ds.train[0]
    d_in = sample.graph.x.shape[1]
    if ds.target_level == "graph":
        d_out = int(np.atleast_1d(sample.target).shape[-1])
        task = "graph"
    else:
        d_out = int(np.asarray(sample.target).reshape(sample.graph.n, -1).shape[1])
        task = "node"
    return d_in, d_out, task


def _build_cfg(model_kind: str, ds, model_overrides: dict) -> ModelConfig:
    d_in, d_out, task = _infer_dims(ds)
    try:
        return ModelConfig(kind=model_kind, d_in=d_in, d_out=d_out, task=task,
                           **model_overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad model config: {exc}") from exc


def _format_float(x: float) -> str:
    return repr(float(x))


def cmd_train(args) -> int:
    model_over, train_over, grid = load_run_config(args.config)
    if grid:
        raise UsageError("config has a grid section; use the grid command")
    try:
        ds = load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    cfg = _build_cfg(args.model, ds, model_over)
    try:
        tc = TrainConfig(**train_over)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from exc
    seeds = _parse_ints(args.seeds) if args.seeds else [_default_seed()]
    os.makedirs(args.out, exist_ok=True)
    batches = batch_splits(ds)
    results = []
    for seed in seeds:
        result, params = train(cfg, ds, tc, seed, batches)
        results.append(result)
        with open(os.path.join(args.out, f"run_{seed}.json"), "w") as fh:
            json.dump(asdict(result), fh, sort_keys=True, indent=1)
        save_checkpoint(os.path.join(args.out, f"ckpt_{seed}.json"), cfg, params)
    agg = aggregate(results, tc.metric)
    row = {
        "task": ds.task,
        "model": args.model,
        "metric": tc.metric,
        "n_runs": agg["n_runs"],
        "n_failed": agg["n_failed"],
        "val_mean": _format_float(agg["val_mean"]),
        "val_std": _format_float(agg["val_std"]),
        "test_mean": _format_float(agg["test_mean"]),
        "test_std": _format_float(agg["test_std"]),
        "seeds": ";".join(str(s) for s in seeds),
    }
    with open(os.path.join(args.out, "aggregate.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row))
        writer.writeheader()
        writer.writerow(row)
        fh.write("# std is the population standard deviation\n")
    with open(os.path.join(args.out, "aggregate.json"), "w") as fh:
        json.dump({**agg, "task": ds.task, "model": args.model, "seeds": seeds},
                  fh, sort_keys=True, indent=1)
    print(f"{ds.task} {args.model}: test {tc.metric} "
          f"{agg['test_mean']:.6g} +- {agg['test_std']:.3g} over {len(seeds)} seeds")
    if agg["n_failed"]:
        raise NumericFailure(f"{agg['n_failed']} of {len(seeds)} runs diverged")
    return 0


def cmd_grid(args) -> int:
    model_over, train_over, grid = load_run_config(args.config)
    if not grid:
        raise UsageError("grid command needs a non-empty grid section in the config")
    try:
        ds = load_dataset(args.data)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    base_cfg = _build_cfg(args.model, ds, model_over)
    try:
        tc = TrainConfig(**train_over)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad train config: {exc}") from exc
    seeds = _parse_ints(args.seeds) if args.seeds else [_default_seed()]
    os.makedirs(args.out, exist_ok=True)
    table = run_grid(base_cfg, grid, ds, tc, seeds, jobs=args.jobs)
    with open(os.path.join(args.out, "grid.json"), "w") as fh:
        json.dump(table, fh, sort_keys=True, indent=1)
    keys = sorted(grid)
    with open(os.path.join(args.out, "grid.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(keys + ["val_mean", "val_std", "test_mean", "test_std", "n_failed"])
        for cell in table["cells"]:
            agg = cell["aggregate"]
            writer.writerow(
                [cell["overrides"][k] for k in keys]
                + [_format_float(agg["val_mean"]), _format_float(agg["val_std"]),
                   _format_float(agg["test_mean"]), _format_float(agg["test_std"]),
                   agg["n_failed"]]
            )
    best = table["best"]
    print(f"best cell: {best['overrides']} "
          f"(val {best['aggregate']['val_mean']:.6g})")
    n_failed = sum(c["aggregate"]["n_failed"] for c in table["cells"])
    if n_failed:
        raise NumericFailure(f"{n_failed} diverged runs across the grid")
    return 0


# ---------------------------------------------------------------------------
# diagnose


def _encode_x0(cfg: ModelConfig, params, x: np.ndarray) -> np.ndarray:
    tape = Tape(record=False)
    out = tape.act(
        forward_mlp(tape, params, "enc", cfg.encoder_hidden + 1, cfg.activation,
                    tape.constant(x)),
        cfg.activation,
    )
    return out.value


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def cmd_diagnose(args) -> int:
    from . import plotting
    from .diagnostics import DiagnosticsReport

    if not os.path.exists(args.model_ckpt):
        raise UsageError(f"missing checkpoint {args.model_ckpt}")
    try:
        cfg, params = load_checkpoint(args.model_ckpt)
        ds = load_dataset(args.data)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(str(exc)) from exc
    probes = [p.strip() for p in args.probes.split(",") if p.strip()]
    known = {"eig", "bsm", "energy", "drift", "rate"}
    bad = set(probes) - known
    if bad:
        raise UsageError(f"unknown probes {sorted(bad)}")
    samples = ds.test or ds.val or ds.train
    if not samples:
        raise UsageError("dataset has no samples")
    g = samples[0].graph
    ops = build_operators(g)
    x0 = _encode_x0(cfg, params, g.x)
    report = DiagnosticsReport()
    os.makedirs(args.out, exist_ok=True)

    def out_path(name: str) -> str:
        return os.path.join(args.out, name)

    if "eig" in probes:
        if cfg.kind.startswith("swan"):
            m1, m2 = assemble_swan_jacobian(ops, x0, params, cfg)
            mre, ev = max_re_eig(m2)
        elif cfg.kind == "adgn":
            ev = eig_general(antisymmetrize(params["core.w"].value))
            mre = float(np.max(np.abs(ev.real)))
        elif cfg.kind in ("hdgn", "phdgn"):
            jac = fd_field_jacobian(lambda x: hamiltonian_field(params, cfg, ops, x), x0)
            mre, ev = max_re_eig(jac)
        else:
            raise UsageError(f"eig probe not defined for model kind {cfg.kind!r}")
        report.max_re_eig = mre
        report.eigenvalues = list(ev)
        _write_csv(out_path("eig.csv"), ["re", "im"],
                   [[z.real, z.imag] for z in ev])
        plotting.plot_spectrum(ev, out_path("eig.png"))
    if "bsm" in probes:
        trace = bsm_trace(params, cfg, ops, x0, node=0)
        report.bsm_per_layer = trace
        _write_csv(out_path("bsm.csv"), ["layer", "norm"], trace)
        plotting.plot_bsm(trace, out_path("bsm.png"))
    if "energy" in probes:
        if cfg.kind not in ("hdgn", "phdgn"):
            raise UsageError("energy probe needs a hamiltonian model")
        trace = energy_trace(params, cfg, ops, x0)
        report.energy_trace = trace
        _write_csv(out_path("energy.csv"), ["t", "H"], trace)
        plotting.plot_energy(trace, out_path("energy.png"))
    if "drift" in probes:
        drifts = jacobian_drift(params, cfg, ops, x0)
        report.jacobian_drift = drifts
        _write_csv(out_path("drift.csv"), ["layer", "drift"],
                   list(enumerate(drifts, start=2)))
        plotting.plot_drift(drifts, out_path("drift.png"))
    if "rate" in probes:
        lin_cfg = ModelConfig(**{**cfg.to_dict(), "act": "identity",
                                 "kind": "swan" if not cfg.kind.startswith("swan") else cfg.kind})
        curves = {}
        if lin_cfg.kind.startswith("swan") and "core.z" in params:
            curves["swan-linear"] = propagation_rate("swan-linear", g, params, lin_cfg,
                                                     t_max=10.0, steps=50)
        curves["heat"] = propagation_rate("heat", g, None, cfg, t_max=10.0, steps=50)
        report.rate_curve = curves.get("swan-linear", curves["heat"])
        rows = []
        for label, curve in curves.items():
            rows += [[label, t, v] for t, v in curve]
        _write_csv(out_path("rate.csv"), ["field", "t", "norm"], rows)
        plotting.plot_rate(curves, out_path("rate.png"))
    with open(out_path("report.json"), "w") as fh:
        fh.write(report.to_json())
    print(f"wrote diagnostics for probes {probes} to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    from . import plotting

    rows = []
    for d in args.indirs:
        path = os.path.join(d, "aggregate.json")
        if not os.path.exists(path):
            raise UsageError(f"no aggregate.json under {d}")
        with open(path) as fh:
            agg = json.load(fh)
        rows.append(agg)
    if not rows:
        raise UsageError("no input directories")
    rows.sort(key=lambda r: (r.get("task", ""), r.get("model", "")))
    cols = ["task", "model", "metric", "n_runs", "n_failed",
            "val_mean", "val_std", "test_mean", "test_std"]
    if args.format == "csv":
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for r in rows:
                writer.writerow([r.get(c) for c in cols])
    else:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, sort_keys=True, indent=1)
    fig_path = os.path.splitext(args.out)[0] + ".png"
    plotting.plot_report_table(rows, fig_path)
    print(f"merged {len(rows)} run dirs into {args.out} (figure: {fig_path})")
    return 0


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nondiss",
        description="Stable non-dissipative graph-ODE layers: data, training, diagnostics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic benchmark dataset")
    p.add_argument("--task", required=True,
                   choices=list(TRANSFER_KINDS) + list(PROPERTY_TASKS))
    p.add_argument("--k", type=int, default=3, help="transfer distance")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sizes", default=None, help="property-task node sizes lo,hi")
    p.add_argument("--counts", default=None, help="train,val,test sample counts")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one model on a dataset")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--seeds", default=None, help="comma-separated seeds")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="hyperparameter grid search")
    p.add_argument("--model", required=True, choices=list(MODEL_KINDS))
    p.add_argument("--data", required=True)
    p.add_argument("--config", required=True, help="JSON config with a grid section")
    p.add_argument("--seeds", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("diagnose", help="run diagnostics probes on a checkpoint")
    p.add_argument("--model-ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--probes", default="eig,bsm,energy,drift,rate")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("report", help="merge run directories into one table")
    p.add_argument("--in", dest="indirs", nargs="+", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FloatingPointError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
