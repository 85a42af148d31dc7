"""Node-injection attack: add nodes, wire random edges, craft features by PGD.

Injected features start at the original feature mean and are pushed, by
sign-gradient ascent on the prediction shift of the original nodes, inside an
L-infinity box around that start and clipped to the original feature range.
Injected nodes are labeled class 0 and excluded from every split mask.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SplitMask
from .errors import StructuralError
from .graph import Graph, build_graph, edge_index_map
from .model import ModelParams, TvdToReference, _backward, _forward_cache, forward


@dataclass(frozen=True)
class AttackSpec:
    n_nodes: int = 20
    n_edges: int = 20
    feature_bound: float = 0.1  # fraction of max|X| allowed as L-inf shift
    pgd_steps: int = 20
    pgd_step_size: float | None = None  # None -> bound / 5
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1 or self.n_edges < 1:
            raise StructuralError("need at least one injected node and edge")
        if self.feature_bound <= 0:
            raise StructuralError("feature_bound must be positive")
        if self.pgd_steps < 0:
            raise StructuralError("pgd_steps must be >= 0")


@dataclass(frozen=True, eq=False)
class AttackResult:
    perturbed: Dataset
    edge_map: np.ndarray  # original slot -> perturbed slot
    injected_nodes: np.ndarray


def _draw_injection_edges(rng, n_orig: int, n_inj: int, count: int) -> np.ndarray:
    """`count` distinct undirected (original, injected) pairs, seeded."""
    if count > n_orig * n_inj:
        raise StructuralError(f"cannot place {count} distinct edges between {n_inj} injected and {n_orig} original nodes")
    chosen = set()
    pairs = []
    while len(pairs) < count:
        orig = int(rng.integers(0, n_orig))
        inj = n_orig + int(rng.integers(0, n_inj))
        if (orig, inj) not in chosen:
            chosen.add((orig, inj))
            pairs.append((orig, inj))
    return np.asarray(pairs, dtype=np.int64)


def _feature_grad(graph: Graph, features, params: ModelParams, objective) -> np.ndarray:
    cache = _forward_cache(graph, features, params)
    _, dx = _backward(cache, objective.dlogits(cache["probs"]), need_dx=True)
    return dx


def inject_attack(dataset: Dataset, victim: ModelParams, spec: AttackSpec) -> AttackResult:
    """Attack a dataset against a trained victim model.

    Maximizes the victim's prediction shift (masked TVD over original nodes)
    by optimizing the injected features.  Fully determined by spec.seed.
    """
    g = dataset.graph
    n = g.num_nodes
    if dataset.features.shape[1] != victim.in_dim:
        raise StructuralError("victim feature dimension does not match dataset")
    rng = np.random.default_rng(spec.seed)

    new_pairs = _draw_injection_edges(rng, n, spec.n_nodes, spec.n_edges)
    all_pairs = np.concatenate([g.undirected_pairs(), new_pairs])
    big_graph = build_graph(n + spec.n_nodes, all_pairs)
    mapping = edge_index_map(g, big_graph)

    x_orig = dataset.features
    bound = spec.feature_bound * np.abs(x_orig).max()
    step = spec.pgd_step_size if spec.pgd_step_size is not None else bound / 5.0
    lo, hi = x_orig.min(), x_orig.max()

    start = np.tile(x_orig.mean(axis=0), (spec.n_nodes, 1))
    x_inj = start.copy()
    _, probs_before = forward(g, x_orig, victim)
    # reference rows for injected nodes are never read (mask covers originals)
    reference = np.concatenate([probs_before, np.zeros((spec.n_nodes, victim.num_classes))])
    objective = TvdToReference(reference, np.arange(n))
    for _ in range(spec.pgd_steps):
        x_full = np.concatenate([x_orig, x_inj])
        dx = _feature_grad(big_graph, x_full, victim, objective)
        x_inj = x_inj + step * np.sign(dx[n:])
        x_inj = np.clip(x_inj, start - bound, start + bound)
        x_inj = np.clip(x_inj, lo, hi)

    labels = np.concatenate([dataset.labels, np.zeros(spec.n_nodes, dtype=np.int64)])
    pad = np.zeros(spec.n_nodes, dtype=bool)
    split = SplitMask(
        np.concatenate([dataset.split.train, pad]),
        np.concatenate([dataset.split.val, pad]),
        np.concatenate([dataset.split.test, pad]),
    )
    perturbed = Dataset(
        big_graph,
        np.concatenate([x_orig, x_inj]),
        labels,
        dataset.num_classes,
        split,
        name=f"{dataset.name}+inj{spec.n_nodes}",
    )
    return AttackResult(perturbed, mapping, np.arange(n, n + spec.n_nodes, dtype=np.int64))
