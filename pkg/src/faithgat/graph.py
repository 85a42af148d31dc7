"""Immutable CSR graph with forced symmetry and self-loops.

Every edge of an undirected input pair is stored in both directions, and every
node carries exactly one self-loop, so each directed slot owns its own
attention weight and the per-node softmax is always defined.  Slot order is
deterministic: sorted by destination row, then source column.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True, eq=False)
class Graph:
    """CSR adjacency: row i holds the sorted neighbor (source) ids of node i."""

    num_nodes: int
    row_offsets: np.ndarray  # int64, shape (N+1,)
    col_indices: np.ndarray  # int64, shape (num_slots,)
    # destination node of each slot, derived once from row_offsets
    dst: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        degrees = np.diff(self.row_offsets)
        object.__setattr__(self, "dst", np.repeat(np.arange(self.num_nodes, dtype=np.int64), degrees))
        for arr in (self.row_offsets, self.col_indices, self.dst):
            arr.flags.writeable = False

    @property
    def num_slots(self) -> int:
        return int(self.col_indices.shape[0])

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[node] : self.row_offsets[node + 1]]

    def slot_of(self, u: int, v: int) -> int:
        """Index of directed slot (u <- v), or -1 when absent."""
        lo, hi = self.row_offsets[u], self.row_offsets[u + 1]
        pos = lo + np.searchsorted(self.col_indices[lo:hi], v)
        if pos < hi and self.col_indices[pos] == v:
            return int(pos)
        return -1

    def undirected_pairs(self) -> np.ndarray:
        """(m, 2) array of u < v pairs, excluding self-loops, sorted."""
        keep = self.dst < self.col_indices
        return np.column_stack([self.dst[keep], self.col_indices[keep]])


def build_graph(num_nodes: int, pairs: np.ndarray) -> Graph:
    """Build a Graph from undirected pairs: symmetrize, dedupe, add self-loops.

    `pairs` is an (m, 2) int array; node ids must lie in [0, num_nodes).
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
        raise StructuralError(
            f"edge endpoint out of range [0, {num_nodes}): {pairs.min()}..{pairs.max()}"
        )
    loops = np.arange(num_nodes, dtype=np.int64)
    directed = np.concatenate([pairs, pairs[:, ::-1], np.column_stack([loops, loops])])
    directed = np.unique(directed, axis=0)  # sorts by (row, col) and dedupes
    row_offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(directed[:, 0], minlength=num_nodes), out=row_offsets[1:])
    return Graph(num_nodes, row_offsets, np.ascontiguousarray(directed[:, 1]))


def validate_graph(g: Graph) -> None:
    """Assert the CSR invariants; raises StructuralError on violation."""
    off, col = g.row_offsets, g.col_indices
    if off[0] != 0 or off[-1] != len(col) or np.any(np.diff(off) < 0):
        raise StructuralError("row_offsets must be non-decreasing from 0 to num_slots")
    if len(col) and (col.min() < 0 or col.max() >= g.num_nodes):
        raise StructuralError("col index out of range")
    for i in range(g.num_nodes):
        nbrs = g.neighbors(i)
        if np.any(np.diff(nbrs) <= 0):
            raise StructuralError(f"row {i}: neighbor list not strictly increasing")
        if i not in nbrs:
            raise StructuralError(f"row {i}: missing self-loop")
    # symmetry: every (u, v) slot has a (v, u) twin
    for e in range(g.num_slots):
        if g.slot_of(int(g.col_indices[e]), int(g.dst[e])) < 0:
            raise StructuralError(f"slot {e}: reverse direction missing")


def edge_index_map(before: Graph, after: Graph) -> np.ndarray:
    """Map every slot of `before` to its slot in the supergraph `after`.

    Total and injective over before's slots; raises StructuralError if any
    before-edge is absent in after (perturbations only add edges).
    """
    if after.num_nodes < before.num_nodes:
        raise StructuralError("`after` has fewer nodes than `before`")
    mapping = np.empty(before.num_slots, dtype=np.int64)
    for i in range(before.num_nodes):
        lo_b, hi_b = before.row_offsets[i], before.row_offsets[i + 1]
        lo_a, hi_a = after.row_offsets[i], after.row_offsets[i + 1]
        cols_b = before.col_indices[lo_b:hi_b]
        cols_a = after.col_indices[lo_a:hi_a]
        pos = np.searchsorted(cols_a, cols_b)
        ok = (pos < hi_a - lo_a) & (cols_a[np.minimum(pos, hi_a - lo_a - 1)] == cols_b)
        if not np.all(ok):
            missing = cols_b[~ok][0]
            raise StructuralError(f"edge ({i}, {missing}) of `before` is missing in `after`")
        mapping[lo_b:hi_b] = lo_a + pos
    return mapping
