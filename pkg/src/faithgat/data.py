"""Dataset container, text-file loaders/writers, and the SBM benchmark generator.

File formats (all plain text, diff-able at desk scale):
  edges    whitespace-separated `u v` pairs, one per line
  features CSV rows of reals, one row per node
  labels   one integer class id per line
  split    one of {train, val, test, none} per line
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError
from .graph import Graph, build_graph

SPLIT_TOKENS = ("train", "val", "test", "none")


@dataclass(frozen=True, eq=False)
class SplitMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for m in (self.train, self.val, self.test):
            m.flags.writeable = False
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise StructuralError("split masks overlap")
        if not self.train.any():
            raise StructuralError("train split is empty")


@dataclass(frozen=True, eq=False)
class Dataset:
    graph: Graph
    features: np.ndarray  # (N, F) float64
    labels: np.ndarray  # (N,) int64
    num_classes: int
    split: SplitMask
    name: str = "dataset"

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise StructuralError("feature/label row count does not match graph")
        if not np.all(np.isfinite(self.features)):
            raise StructuralError("non-finite feature entries")
        if self.num_classes < 2:
            raise StructuralError("need at least 2 classes")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise StructuralError("label outside [0, num_classes)")
        for m in (self.split.train, self.split.val, self.split.test):
            if m.shape[0] != n:
                raise StructuralError("split mask length does not match graph")
        self.features.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def train_val_mask(self) -> np.ndarray:
        return self.split.train | self.split.val


def _parse_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line:
                yield lineno, line


def _read_edge_list(path, num_nodes: int) -> np.ndarray:
    pairs = []
    for lineno, line in _parse_lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise ParseError(path, lineno, f"expected `u v`, got {line!r}")
        try:
            u, v = int(toks[0]), int(toks[1])
        except ValueError:
            raise ParseError(path, lineno, f"non-integer node id in {line!r}") from None
        if not (0 <= u < num_nodes and 0 <= v < num_nodes):
            raise ParseError(path, lineno, f"node id out of range [0, {num_nodes}): {line!r}")
        pairs.append((u, v))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def _read_features(path) -> np.ndarray:
    rows, width = [], None
    for lineno, line in _parse_lines(path):
        toks = line.split(",") if "," in line else line.split()
        try:
            row = [float(t) for t in toks]
        except ValueError:
            raise ParseError(path, lineno, "non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(path, lineno, f"expected {width} columns, got {len(row)}")
        rows.append(row)
    if not rows:
        raise StructuralError(f"{path}: empty feature file")
    return np.asarray(rows, dtype=np.float64)


def _read_labels(path) -> np.ndarray:
    labels = []
    for lineno, line in _parse_lines(path):
        try:
            labels.append(int(line))
        except ValueError:
            raise ParseError(path, lineno, f"non-integer label {line!r}") from None
    return np.asarray(labels, dtype=np.int64)


def _read_split(path, num_nodes: int) -> SplitMask:
    masks = {t: np.zeros(num_nodes, dtype=bool) for t in SPLIT_TOKENS[:3]}
    count = 0
    for lineno, line in _parse_lines(path):
        tok = line.lower()
        if tok not in SPLIT_TOKENS:
            raise ParseError(path, lineno, f"expected one of {SPLIT_TOKENS}, got {line!r}")
        if count >= num_nodes:
            raise ParseError(path, lineno, "more split lines than nodes")
        if tok != "none":
            masks[tok][count] = True
        count += 1
    if count != num_nodes:
        raise StructuralError(f"{path}: {count} split lines for {num_nodes} nodes")
    return SplitMask(masks["train"], masks["val"], masks["test"])


def stratified_split(labels: np.ndarray, seed: int, fractions=(0.1, 0.1)) -> SplitMask:
    """Per-class seeded split: `fractions` of each class go to train/val, rest test."""
    n = labels.shape[0]
    rng = np.random.default_rng(seed)
    train = np.zeros(n, dtype=bool)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(len(idx))]
        n_tr = int(round(fractions[0] * len(idx)))
        n_va = int(round(fractions[1] * len(idx)))
        train[idx[:n_tr]] = True
        val[idx[n_tr : n_tr + n_va]] = True
        test[idx[n_tr + n_va :]] = True
    if not train.any():
        raise StructuralError("stratified split produced an empty train set")
    return SplitMask(train, val, test)


def load_dataset(
    edge_list_path,
    features_path,
    labels_path,
    split_path=None,
    name: str = "dataset",
    split_seed: int = 0,
) -> Dataset:
    """Load a dataset from text files.

    The edge list is symmetrized (both directions stored), duplicates collapsed,
    and one self-loop added per node.  When `split_path` is None a seeded
    stratified 10/10/80 split is generated.
    """
    features = _read_features(features_path)
    num_nodes = features.shape[0]
    labels = _read_labels(labels_path)
    if labels.shape[0] != num_nodes:
        raise StructuralError(
            f"{labels_path}: {labels.shape[0]} labels for {num_nodes} feature rows"
        )
    pairs = _read_edge_list(edge_list_path, num_nodes)
    graph = build_graph(num_nodes, pairs)
    if split_path is not None:
        split = _read_split(split_path, num_nodes)
    else:
        split = stratified_split(labels, split_seed)
    return Dataset(graph, features, labels, int(labels.max()) + 1, split, name=name)


def generate_sbm(
    blocks: int,
    nodes_per_block: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_shift: float,
    seed: int,
) -> Dataset:
    """Stochastic-block-model benchmark; block id is the label.

    Node features are unit-variance gaussian noise plus a per-block offset of
    Euclidean norm `feature_shift`.  Split is stratified 10/10/80.  Fully
    determined by `seed`.
    """
    if not (0.0 <= p_out < p_in <= 1.0) and not (p_in == p_out == 0.0):
        raise StructuralError(f"need 0 <= p_out < p_in <= 1, got p_in={p_in} p_out={p_out}")
    if feature_shift <= 0:
        raise StructuralError("feature_shift must be positive")
    n = blocks * nodes_per_block
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(blocks, dtype=np.int64), nodes_per_block)

    # draw order pinned: edges, block offsets, noise, split
    prob = np.where(labels[:, None] == labels[None, :], p_in, p_out)
    upper = np.triu(rng.random((n, n)) < prob, k=1)
    pairs = np.column_stack(np.nonzero(upper)).astype(np.int64)
    graph = build_graph(n, pairs)

    offsets = rng.standard_normal((blocks, feature_dim))
    offsets *= feature_shift / np.linalg.norm(offsets, axis=1, keepdims=True)
    features = rng.standard_normal((n, feature_dim)) + offsets[labels]

    split_seed = int(rng.integers(0, 2**31 - 1))
    split = stratified_split(labels, split_seed)
    name = f"sbm{blocks}x{nodes_per_block}"
    return Dataset(graph, features, labels, blocks, split, name=name)


def write_dataset(ds: Dataset, out_dir, seed=None) -> dict:
    """Write the four data files plus a manifest JSON; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pairs = ds.graph.undirected_pairs()
    with open(out / "edges.txt", "w") as fh:
        for u, v in pairs:
            fh.write(f"{u} {v}\n")
    with open(out / "features.csv", "w") as fh:
        for row in ds.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(out / "labels.txt", "w") as fh:
        for y in ds.labels:
            fh.write(f"{y}\n")
    with open(out / "split.txt", "w") as fh:
        for i in range(ds.graph.num_nodes):
            tok = (
                "train"
                if ds.split.train[i]
                else "val" if ds.split.val[i] else "test" if ds.split.test[i] else "none"
            )
            fh.write(tok + "\n")
    manifest = {
        "name": ds.name,
        "N": ds.graph.num_nodes,
        "E": ds.graph.num_slots,
        "F": int(ds.features.shape[1]),
        "C": ds.num_classes,
        "seed": seed,
    }
    with open(out / "dataset_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_dataset_dir(data_dir, name=None) -> Dataset:
    d = Path(data_dir)
    manifest_path = d / "dataset_manifest.json"
    if name is None and manifest_path.exists():
        name = json.loads(manifest_path.read_text()).get("name", "dataset")
    return load_dataset(
        d / "edges.txt",
        d / "features.csv",
        d / "labels.txt",
        d / "split.txt",
        name=name or "dataset",
    )
