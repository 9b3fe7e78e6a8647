import math

import numpy as np
import pytest

from nondiss.datasets import gen_transfer
from nondiss.layers import ModelConfig, init_model
from nondiss.training import (
    RunResult,
    TrainConfig,
    aggregate,
    batch_splits,
    evaluate,
    run_grid,
    run_seeds,
    train,
)


@pytest.fixture(scope="module")
def tiny_ds():
    return gen_transfer("transfer-line", 2, 20, 8, 8, seed=0)


def tiny_cfg(**kw):
    base = dict(kind="adgn", d_in=1, d_out=1, hidden=4, layers=2,
                eps=0.5, gamma=0.1)
    base.update(kw)
    return ModelConfig(**base)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr=0.0)
        with pytest.raises(ValueError):
            TrainConfig(max_epochs=10, patience=20)
        with pytest.raises(ValueError):
            TrainConfig(metric="accuracy")

    def test_metric_value(self):
        r = RunResult(0, best_val=0.01, test=0.01, epochs_ran=1, wall_time=0.0)
        assert r.metric_value("mse") == 0.01
        assert r.metric_value("log10mse") == pytest.approx(-2.0)


class TestTrain:
    def test_loss_decreases(self, tiny_ds):
        batches = batch_splits(tiny_ds)
        cfg = tiny_cfg()
        init_loss = evaluate(init_model(cfg, 0), cfg, batches["train"])
        res, params = train(cfg, tiny_ds, TrainConfig(max_epochs=60, patience=60),
                            0, batches)
        assert not res.failed
        assert evaluate(params, cfg, batches["train"]) < init_loss
        assert res.best_val < init_loss

    def test_returned_params_are_best_val_snapshot(self, tiny_ds):
        batches = batch_splits(tiny_ds)
        cfg = tiny_cfg()
        res, params = train(cfg, tiny_ds, TrainConfig(max_epochs=40, patience=40),
                            1, batches)
        assert evaluate(params, cfg, batches["val"]) == pytest.approx(res.best_val)
        assert evaluate(params, cfg, batches["test"]) == pytest.approx(res.test)

    def test_deterministic_given_seed(self, tiny_ds):
        tc = TrainConfig(max_epochs=15, patience=15)
        a, pa = train(tiny_cfg(), tiny_ds, tc, 7)
        b, pb = train(tiny_cfg(), tiny_ds, tc, 7)
        assert (a.best_val, a.test, a.epochs_ran) == (b.best_val, b.test, b.epochs_ran)
        for name, p in pa.items():
            np.testing.assert_array_equal(pb[name].value, p.value)

    def test_seed_changes_outcome(self, tiny_ds):
        tc = TrainConfig(max_epochs=10, patience=10)
        a, _ = train(tiny_cfg(), tiny_ds, tc, 0)
        b, _ = train(tiny_cfg(), tiny_ds, tc, 1)
        assert a.best_val != b.best_val

    def test_early_stopping_caps_epochs(self, tiny_ds):
        # a hugely overshooting learning rate makes validation oscillate
        res, _ = train(tiny_cfg(), tiny_ds,
                       TrainConfig(lr=5.0, max_epochs=500, patience=2), 0)
        assert res.epochs_ran < 500

    def test_divergence_reported_not_raised(self, tiny_ds):
        # absurd learning rate overflows within a few steps
        cfg = tiny_cfg(act="identity", eps=1.0)
        with np.errstate(all="ignore"):
            res, _ = train(cfg, tiny_ds, TrainConfig(lr=1e200, max_epochs=30,
                                                     patience=30), 0)
        assert res.failed
        assert math.isinf(res.best_val) and math.isinf(res.test)


class TestAggregate:
    def test_hand_values(self):
        rs = [RunResult(0, 1.0, 2.0, 1, 0.0), RunResult(1, 3.0, 4.0, 1, 0.0)]
        agg = aggregate(rs)
        assert agg["val_mean"] == 2.0
        assert agg["test_mean"] == 3.0
        assert agg["val_std"] == 1.0  # population std
        assert agg["n_failed"] == 0

    def test_log_metric(self):
        rs = [RunResult(0, 0.1, 0.01, 1, 0.0)]
        agg = aggregate(rs, "log10mse")
        assert agg["test_mean"] == pytest.approx(-2.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_run_seeds_count(self, tiny_ds):
        rs = run_seeds(tiny_cfg(), tiny_ds, TrainConfig(max_epochs=3, patience=3),
                       [0, 1, 2])
        assert [r.seed for r in rs] == [0, 1, 2]


class TestGrid:
    def test_best_cell_has_lowest_val_mean(self, tiny_ds):
        tc = TrainConfig(max_epochs=8, patience=8)
        out = run_grid(tiny_cfg(), {"hidden": [2, 4], "eps": [0.1, 0.5]},
                       tiny_ds, tc, [0])
        assert len(out["cells"]) == 4
        best = out["best"]["aggregate"]["val_mean"]
        assert all(c["aggregate"]["val_mean"] >= best for c in out["cells"])

    def test_parallel_matches_serial(self, tiny_ds):
        tc = TrainConfig(max_epochs=5, patience=5)
        grid = {"hidden": [2, 4]}
        serial = run_grid(tiny_cfg(), grid, tiny_ds, tc, [0], jobs=1)
        par = run_grid(tiny_cfg(), grid, tiny_ds, tc, [0], jobs=2)
        for a, b in zip(serial["cells"], par["cells"]):
            assert a["aggregate"] == b["aggregate"]

    def test_empty_grid_rejected(self, tiny_ds):
        with pytest.raises(ValueError):
            run_grid(tiny_cfg(), {}, tiny_ds, TrainConfig(), [0])
        with pytest.raises(ValueError):
            run_grid(tiny_cfg(), {"hidden": []}, tiny_ds, TrainConfig(), [0])
