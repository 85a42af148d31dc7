import numpy as np
import pytest

import faithgat as fg
from faithgat.model import TrainConfig, train_vanilla


def random_graph(rng, n, avg_edges=2.0):
    """Random small graph: n nodes, ~avg_edges*n undirected pairs, self-loops forced."""
    m = max(1, int(avg_edges * n))
    pairs = rng.integers(0, n, size=(m, 2))
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    if len(pairs) == 0:
        pairs = np.array([[0, min(1, n - 1)]])
    return fg.build_graph(n, pairs)


def fd_grad(f, arr, h=1e-5):
    """Central finite differences of scalar f() w.r.t. every entry of arr."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = arr[i]
        arr[i] = orig + h
        fp = f()
        arr[i] = orig - h
        fm = f()
        arr[i] = orig
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(analytic, numeric, floor=1e-4):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float((np.abs(analytic - numeric) / denom).max())


@pytest.fixture(scope="session")
def small_dataset():
    return fg.generate_sbm(2, 15, 0.2, 0.02, 6, 1.0, seed=11)


@pytest.fixture(scope="session")
def small_trained(small_dataset):
    params, _ = train_vanilla(small_dataset, TrainConfig(epochs=40, seed=0))
    return params
