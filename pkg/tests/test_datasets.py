import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nondiss.datasets import (
    PROPERTY_TASKS,
    TRANSFER_KINDS,
    gen_graph_property,
    gen_transfer,
    load_dataset,
    save_dataset,
)
from nondiss.graphs import diameter, is_connected, sssp


class TestTransfer:
    @pytest.mark.parametrize("kind", TRANSFER_KINDS)
    def test_shapes_and_counts(self, kind):
        ds = gen_transfer(kind, 3, 10, 4, 5, seed=0)
        assert (len(ds.train), len(ds.val), len(ds.test)) == (10, 4, 5)
        n = 4 if kind == "transfer-line" else 6
        for s in ds.train:
            assert s.graph.n == n
            assert s.graph.x.shape == (n, 1)
            assert s.target.shape == (n, 1)

    @pytest.mark.parametrize("kind", TRANSFER_KINDS)
    def test_target_swaps_source_and_sink_only(self, kind):
        ds = gen_transfer(kind, 4, 5, 1, 1, seed=3)
        src = ds.meta["source"]
        dst = ds.meta["target_node"]
        for s in ds.train:
            assert s.graph.x[src, 0] == 1.0
            assert s.graph.x[dst, 0] == 0.0
            assert s.target[src, 0] == 0.0
            assert s.target[dst, 0] == 1.0
            others = np.ones(s.graph.n, bool)
            others[[src, dst]] = False
            np.testing.assert_array_equal(s.target[others], s.graph.x[others])
            assert np.all((s.graph.x[others] >= 0) & (s.graph.x[others] < 0.5))

    @pytest.mark.parametrize("kind,k,dist", [
        ("transfer-line", 5, 5),
        ("transfer-ring", 5, 5),
        # chords do not shorten the source-to-antipode route
        ("transfer-crossed-ring", 5, 5),
    ])
    def test_hop_distance(self, kind, k, dist):
        ds = gen_transfer(kind, k, 1, 1, 1, seed=0)
        assert ds.meta["distance"] == dist
        g = ds.train[0].graph
        assert int(sssp(g, ds.meta["source"])[ds.meta["target_node"]]) == dist

    def test_samples_distinct_across_splits(self):
        ds = gen_transfer("transfer-ring", 3, 4, 2, 2, seed=0)
        feats = [s.graph.x.tobytes() for sp in ds.splits().values() for s in sp]
        assert len(set(feats)) == len(feats)

    @given(st.integers(0, 10_000))
    @settings(max_examples=10, deadline=None)
    def test_deterministic_in_seed(self, seed):
        a = gen_transfer("transfer-line", 3, 3, 1, 1, seed=seed)
        b = gen_transfer("transfer-line", 3, 3, 1, 1, seed=seed)
        for sa, sb in zip(a.train + a.val + a.test, b.train + b.val + b.test):
            np.testing.assert_array_equal(sa.graph.x, sb.graph.x)
            np.testing.assert_array_equal(sa.target, sb.target)

    def test_rejects_bad_kind_and_k(self):
        with pytest.raises(ValueError):
            gen_transfer("transfer-tree", 3)
        with pytest.raises(ValueError):
            gen_transfer("transfer-line", 0)
        with pytest.raises(ValueError):
            gen_transfer("transfer-ring", 1)


class TestGraphProperty:
    def test_diameter_targets_match_recomputation(self):
        ds = gen_graph_property("diameter", 12, 4, 4, seed=1)
        mean = ds.standardization["mean"]
        std = ds.standardization["std"]
        for s in ds.train + ds.val + ds.test:
            assert is_connected(s.graph)
            assert 25 <= s.graph.n <= 35
            raw = s.target[0] * std + mean
            assert raw == pytest.approx(diameter(s.graph), abs=1e-12)

    def test_sssp_targets_and_source_channel(self):
        ds = gen_graph_property("sssp", 8, 2, 2, seed=2)
        mean = ds.standardization["mean"]
        std = ds.standardization["std"]
        for s in ds.train:
            src_col = s.graph.x[:, 1]
            assert src_col.sum() == 1.0
            source = int(np.argmax(src_col))
            raw = s.target[:, 0] * std + mean
            np.testing.assert_allclose(raw, sssp(s.graph, source), atol=1e-10)
            assert s.mask is not None and s.mask.all()  # connected graphs

    def test_train_split_standardized_to_zero_mean_unit_std(self):
        ds = gen_graph_property("eccentricity", 16, 2, 2, seed=0)
        vals = np.concatenate([s.target.reshape(-1) for s in ds.train])
        assert vals.mean() == pytest.approx(0.0, abs=1e-12)
        assert vals.std() == pytest.approx(1.0, abs=1e-12)

    def test_unstandardized_targets_are_integers(self):
        ds = gen_graph_property("diameter", 6, 2, 2, seed=0, standardize=False)
        assert ds.standardization is None
        for s in ds.train:
            assert s.target[0] == int(s.target[0])

    def test_family_mixture_recorded(self):
        ds = gen_graph_property("diameter", 40, 4, 4, seed=5)
        fams = ds.meta["families"]
        assert sum(fams.values()) == 48
        assert len(fams) >= 3

    def test_deterministic_and_split_disjoint_streams(self):
        a = gen_graph_property("diameter", 6, 2, 2, seed=7)
        b = gen_graph_property("diameter", 6, 2, 2, seed=7)
        for sa, sb in zip(a.train + a.val + a.test, b.train + b.val + b.test):
            np.testing.assert_array_equal(sa.graph.edges, sb.graph.edges)
            np.testing.assert_array_equal(sa.graph.x, sb.graph.x)
        c = gen_graph_property("diameter", 6, 2, 2, seed=8)
        assert any(
            sa.graph.x.tobytes() != sc.graph.x.tobytes()
            for sa, sc in zip(a.train, c.train)
        )

    def test_rejects_bad_task_and_sizes(self):
        with pytest.raises(ValueError):
            gen_graph_property("girth", 1, 1, 1)
        with pytest.raises(ValueError):
            gen_graph_property("diameter", 1, 1, 1, sizes=(1, 5))
        with pytest.raises(ValueError):
            gen_graph_property("diameter", 1, 1, 1, sizes=(9, 5))


class TestSerialization:
    @pytest.mark.parametrize("make", [
        lambda: gen_transfer("transfer-crossed-ring", 3, 4, 2, 2, seed=1),
        lambda: gen_graph_property("sssp", 3, 1, 1, seed=1),
        lambda: gen_graph_property("diameter", 3, 1, 1, seed=1),
    ])
    def test_round_trip(self, make, tmp_path):
        ds = make()
        path = str(tmp_path / "ds.jsonl")
        save_dataset(ds, path)
        ds2 = load_dataset(path)
        assert ds2.task == ds.task and ds2.target_level == ds.target_level
        assert ds2.standardization == ds.standardization
        for sa, sb in zip(
            ds.train + ds.val + ds.test, ds2.train + ds2.val + ds2.test
        ):
            np.testing.assert_array_equal(sa.graph.edges, sb.graph.edges)
            np.testing.assert_array_equal(sa.graph.x, sb.graph.x)
            np.testing.assert_array_equal(sa.target, sb.target)
            if sa.mask is None:
                assert sb.mask is None
            else:
                np.testing.assert_array_equal(sa.mask, sb.mask)

    def test_save_is_byte_deterministic(self, tmp_path):
        p1, p2 = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        save_dataset(gen_transfer("transfer-line", 2, 3, 1, 1, seed=0), p1)
        save_dataset(gen_transfer("transfer-line", 2, 3, 1, 1, seed=0), p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "empty.jsonl"
        p.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_dataset(str(p))

    def test_corrupt_header_reports_line_one(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text("{not json\n")
        with pytest.raises(ValueError, match=":1:"):
            load_dataset(str(p))

    def test_corrupt_record_reports_line_number(self, tmp_path):
        ds = gen_transfer("transfer-line", 2, 2, 1, 1, seed=0)
        p = tmp_path / "ds.jsonl"
        save_dataset(ds, str(p))
        lines = p.read_text().splitlines()
        lines[2] = json.dumps({"split": "train"})  # missing graph/target
        p.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match=":3:"):
            load_dataset(str(p))
