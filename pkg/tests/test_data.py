"""Core data model: ingestion, serialization, splitting, sampling, RNG."""

from __future__ import annotations

import itertools
import json
import math

import numpy as np
import pytest

from covertrain import (
    CandidateSet,
    DataError,
    Dataset,
    RngState,
    load_dataset,
    sample_subset,
    save_dataset,
    split_train_test,
)
from covertrain.data import _child_seed

from conftest import gaussian_task, make_dataset


class TestDataset:
    def test_basic_construction(self):
        ds = make_dataset([[1.0, 2.0], [3.0, 4.0]], [1, -1])
        assert len(ds) == 2
        assert ds.dimension == 2
        assert ds[0].label == 1
        assert np.array_equal(ds[1].features, [3.0, 4.0])

    def test_rejects_bad_labels(self):
        with pytest.raises(DataError, match="label"):
            make_dataset([[1.0]], [0])

    def test_rejects_empty_pool(self):
        with pytest.raises(DataError, match="empty"):
            Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), role="camouflage_pool")

    def test_empty_test_set_allowed(self):
        ds = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), role="test_set")
        assert len(ds) == 0

    def test_immutable(self):
        ds = make_dataset([[1.0, 2.0]], [1])
        with pytest.raises(ValueError):
            ds.X[0, 0] = 9.0

    def test_subset_preserves_order(self):
        ds = gaussian_task(0, 5)
        sub = ds.subset([1, 3, 7])
        assert np.array_equal(sub.X, ds.X[[1, 3, 7]])
        assert np.array_equal(sub.y, ds.y[[1, 3, 7]])


class TestCandidateSet:
    def test_requires_strictly_increasing(self):
        with pytest.raises(DataError):
            CandidateSet((3, 3, 5))
        with pytest.raises(DataError):
            CandidateSet((5, 3))

    def test_cache_attachment(self):
        c = CandidateSet((0, 2)).with_cache(0.5, -1.0)
        assert c.cached_risk == 0.5
        assert c.cached_psi == -1.0
        assert c.indices == (0, 2)


class TestLoadSave:
    def test_csv_roundtrip_bit_exact(self, tmp_path):
        ds = gaussian_task(3, 4)
        path = tmp_path / "pool.csv"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)

    def test_jsonl_roundtrip_bit_exact(self, tmp_path):
        ds = gaussian_task(4, 4)
        path = tmp_path / "pool.jsonl"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)

    def test_small_csv_parse(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,f1,label\n1,2,1\n3,4,-1\n5,6,+1\n")
        ds = load_dataset(path)
        assert len(ds) == 3
        assert ds.dimension == 2
        assert list(ds.y) == [1, -1, 1]

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("")
        with pytest.raises(DataError, match="empty dataset"):
            load_dataset(path)

    def test_header_only_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,label\n")
        with pytest.raises(DataError, match="empty dataset"):
            load_dataset(path)

    def test_dimension_mismatch_names_row(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,f1,label\n1,2,1\n1,2,3,-1\n")
        with pytest.raises(DataError, match="row 2"):
            load_dataset(path)

    def test_jsonl_dimension_mismatch_names_row(self, tmp_path):
        path = tmp_path / "d.jsonl"
        lines = [
            json.dumps({"features": [1.0, 2.0], "label": 1}),
            json.dumps({"features": [1.0], "label": -1}),
        ]
        path.write_text("\n".join(lines))
        with pytest.raises(DataError, match="row 2"):
            load_dataset(path)

    def test_unknown_label_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,label\n1,2\n")
        with pytest.raises(DataError, match="label"):
            load_dataset(path)

    def test_label_map(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,label\n1,orange\n2,apple\n")
        ds = load_dataset(path, label_map={"orange": 1, "apple": -1})
        assert list(ds.y) == [1, -1]
        with pytest.raises(DataError, match="not in label map"):
            load_dataset(path, label_map={"orange": 1})

    def test_add_bias(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("f0,label\n2,1\n3,-1\n")
        ds = load_dataset(path, add_bias=True)
        assert ds.dimension == 2
        assert np.array_equal(ds.X[:, 1], [1.0, 1.0])


class TestSplit:
    def test_sizes_and_disjointness(self):
        ds = gaussian_task(0, 5)  # n = 10
        train, test = split_train_test(ds, 0.8, RngState(1))
        assert len(train) == 8 and len(test) == 2
        rows = {tuple(r) for r in train.X} | {tuple(r) for r in test.X}
        assert len(rows) == 10  # union recovers everything, no overlap

    def test_ceiling_sizes(self):
        for n_per, frac, expected in [(5, 0.7, 7), (5, 0.75, 8), (3, 0.5, 3)]:
            ds = gaussian_task(0, n_per)
            train, test = split_train_test(ds, frac, RngState(1))
            assert len(train) == expected
            assert len(test) == 2 * n_per - expected

    def test_same_seed_same_split(self):
        ds = gaussian_task(2, 10)
        a1, b1 = split_train_test(ds, 0.6, RngState(9))
        a2, b2 = split_train_test(ds, 0.6, RngState(9))
        assert np.array_equal(a1.X, a2.X)
        assert np.array_equal(b1.X, b2.X)

    def test_single_instance_warns(self):
        ds = make_dataset([[1.0]], [1], role="secret_set")
        with pytest.warns(UserWarning, match="empty"):
            train, test = split_train_test(ds, 0.5, RngState(0))
        assert len(train) == 1 and len(test) == 0

    def test_rejects_bad_fraction(self):
        ds = gaussian_task(0, 3)
        for frac in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(DataError):
                split_train_test(ds, frac, RngState(0))


class TestSampleSubset:
    def test_full_pool(self):
        ds = gaussian_task(0, 3)  # n = 6... use m = n
        cand = sample_subset(ds, 6, RngState(0))
        assert cand.indices == tuple(range(6))

    def test_empty_subset_internal(self):
        ds = gaussian_task(0, 3)
        assert sample_subset(ds, 0, RngState(0)).indices == ()

    def test_rejects_oversize(self):
        ds = gaussian_task(0, 2)
        with pytest.raises(DataError):
            sample_subset(ds, 5, RngState(0))

    def test_uniformity_over_pairs(self):
        # n=4, m=2: each of the 6 pairs should appear with frequency 1/6
        # within 3 sigma of the binomial standard error.
        ds = make_dataset([[float(i)] for i in range(4)], [1, 1, -1, -1])
        rng = RngState(123)
        draws = 100_000
        counts = {pair: 0 for pair in itertools.combinations(range(4), 2)}
        for _ in range(draws):
            counts[sample_subset(ds, 2, rng).indices] += 1
        p = 1.0 / 6.0
        band = 3.0 * math.sqrt(p * (1 - p) / draws)
        for pair, count in counts.items():
            assert abs(count / draws - p) <= band, (pair, count)


class TestRngState:
    def test_bit_exact_replay(self):
        a, b = RngState(42), RngState(42)
        ops_a = [a.generator.integers(1000) for _ in range(50)]
        ops_a += list(a.generator.standard_normal(20))
        ops_b = [b.generator.integers(1000) for _ in range(50)]
        ops_b += list(b.generator.standard_normal(20))
        assert ops_a == ops_b

    def test_children_are_independent_and_stable(self):
        r = RngState(7)
        assert r.child(0).seed == r.child(0).seed
        assert r.child(0).seed != r.child(1).seed
        assert _child_seed(7, 3) == _child_seed(7, 3)
        # child derivation does not disturb the parent stream
        r2 = RngState(7)
        r2.child(5)
        assert r2.generator.integers(10**9) == RngState(7).generator.integers(10**9)
