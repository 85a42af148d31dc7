"""Dataset loading, file round-trips, and the SBM generator."""

import numpy as np
import pytest

from faithgat.data import generate_sbm, load_dataset, read_dataset_dir, write_dataset
from faithgat.errors import ParseError, StructuralError


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadDataset:
    def test_round_trip(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "0 1\n1 2\n")
        feats = _write(tmp_path, "f.csv", "1.0,2.0\n3.0,4.0\n5.0,6.0\n")
        labels = _write(tmp_path, "l.txt", "0\n1\n1\n")
        split = _write(tmp_path, "s.txt", "train\nval\ntest\n")
        ds = load_dataset(edges, feats, labels, split)
        assert ds.graph.num_nodes == 3
        assert ds.graph.num_slots == 3 + 4
        assert ds.num_classes == 2
        assert ds.split.train.sum() == 1

    def test_parse_error_names_line(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "0 1\nx 2\n")
        feats = _write(tmp_path, "f.csv", "1.0\n2.0\n3.0\n")
        labels = _write(tmp_path, "l.txt", "0\n1\n1\n")
        with pytest.raises(ParseError) as err:
            load_dataset(edges, feats, labels)
        assert ":2:" in str(err.value)

    def test_dimension_mismatch(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "0 1\n")
        feats = _write(tmp_path, "f.csv", "1.0\n2.0\n")
        labels = _write(tmp_path, "l.txt", "0\n1\n0\n")
        with pytest.raises(StructuralError):
            load_dataset(edges, feats, labels)

    def test_generated_split_when_absent(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "")
        feats = _write(tmp_path, "f.csv", "\n".join("1.0" for _ in range(20)) + "\n")
        labels = _write(tmp_path, "l.txt", "\n".join(str(i % 2) for i in range(20)) + "\n")
        ds = load_dataset(edges, feats, labels, split_seed=0)
        assert ds.split.train.sum() == 2  # 10% of each 10-node class

    def test_bad_split_token(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "0 1\n")
        feats = _write(tmp_path, "f.csv", "1.0\n2.0\n")
        labels = _write(tmp_path, "l.txt", "0\n1\n")
        split = _write(tmp_path, "s.txt", "train\nvaal\n")
        with pytest.raises(ParseError) as err:
            load_dataset(edges, feats, labels, split)
        assert ":2:" in str(err.value)

    def test_out_of_range_node_id(self, tmp_path):
        edges = _write(tmp_path, "edges.txt", "0 9\n")
        feats = _write(tmp_path, "f.csv", "1.0\n2.0\n")
        labels = _write(tmp_path, "l.txt", "0\n1\n")
        with pytest.raises(ParseError):
            load_dataset(edges, feats, labels)


class TestGenerateSbm:
    def test_balanced_construction(self):
        ds = generate_sbm(2, 50, 0.2, 0.01, 4, 1.0, seed=7)
        assert ds.graph.num_nodes == 100
        assert np.bincount(ds.labels).tolist() == [50, 50]
        assert ds.split.train.sum() == 10  # 10% stratified

    def test_same_seed_bit_identical(self):
        a = generate_sbm(2, 20, 0.3, 0.05, 3, 1.0, seed=9)
        b = generate_sbm(2, 20, 0.3, 0.05, 3, 1.0, seed=9)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.graph.col_indices, b.graph.col_indices)
        assert np.array_equal(a.split.train, b.split.train)

    def test_different_seed_differs(self):
        a = generate_sbm(2, 20, 0.3, 0.05, 3, 1.0, seed=1)
        b = generate_sbm(2, 20, 0.3, 0.05, 3, 1.0, seed=2)
        assert not np.array_equal(a.features, b.features)

    def test_zero_probabilities_leave_only_self_loops(self):
        ds = generate_sbm(2, 10, 0.0, 0.0, 3, 1.0, seed=0)
        assert ds.graph.num_slots == 20

    def test_tiny_blocks_empty_train_rejected(self):
        with pytest.raises(StructuralError):
            generate_sbm(2, 4, 0.3, 0.05, 3, 1.0, seed=0)

    def test_invalid_probabilities(self):
        with pytest.raises(StructuralError):
            generate_sbm(2, 10, 0.1, 0.5, 3, 1.0, seed=0)

    def test_symmetry_of_slots(self):
        ds = generate_sbm(3, 12, 0.3, 0.05, 3, 1.0, seed=5)
        g = ds.graph
        for e in range(g.num_slots):
            assert g.slot_of(int(g.col_indices[e]), int(g.dst[e])) >= 0


def test_write_then_read_round_trips(tmp_path):
    ds = generate_sbm(2, 12, 0.3, 0.05, 4, 1.0, seed=3)
    manifest = write_dataset(ds, tmp_path / "d", seed=3)
    assert manifest["N"] == 24 and manifest["C"] == 2
    back = read_dataset_dir(tmp_path / "d")
    assert np.array_equal(back.graph.col_indices, ds.graph.col_indices)
    assert np.allclose(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.split.test, ds.split.test)
