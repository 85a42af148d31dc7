"""Stability and interpretability metrics: prediction shift (g-TVD),
attention shift (g-JSD), and the edge-masking fidelity curves with their
fitted slopes."""

from dataclasses import dataclass

import numpy as np

from .attack import AttackSpec, inject_attack
from .data import Dataset
from .errors import EvaluationError, StructuralError
from .fgai import tvd_loss
from .graph import Graph, build_graph
from .model import AttentionState, ModelParams, forward, micro_f1

DEFAULT_RATIOS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
_LOG_FLOOR = 1e-12


def g_tvd(before, after, node_scope) -> float:
    """Prediction shift: class-wise L1 gap summed over scoped nodes / (2 |scope|)."""
    return tvd_loss(np.asarray(after)[: np.asarray(before).shape[0]], before, node_scope)


def g_jsd(w_before, w_after, edge_map=None, num_edges: int | None = None) -> float:
    """Attention shift: Jensen-Shannon divergence over the common edge slots,
    rescaled by the compared-slot count.

    `edge_map` maps slots of the before-vector into the after-vector; identity
    when None.  Vectors are compared as-is (no renormalization).  Natural log;
    entries floored at 1e-12.
    """
    w = np.asarray(w_before, dtype=np.float64).ravel()
    w2 = np.asarray(w_after, dtype=np.float64).ravel()
    if edge_map is not None:
        w2 = w2[np.asarray(edge_map, dtype=np.int64)]
    if w.shape != w2.shape:
        raise StructuralError("attention vectors differ in length after slot restriction")
    if w.shape[0] == 0:
        raise StructuralError("empty comparison set")
    n_edges = num_edges if num_edges is not None else w.shape[0]
    w = np.maximum(w, _LOG_FLOOR)
    w2 = np.maximum(w2, _LOG_FLOOR)
    mid = 0.5 * (w + w2)
    kl1 = float(np.sum(w * np.log(w / mid)))
    kl2 = float(np.sum(w2 * np.log(w2 / mid)))
    return (kl1 + kl2) / (2 * n_edges)


def ols_slope(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xc = xs - xs.mean()
    denom = float(np.dot(xc, xc))
    if denom == 0.0:
        raise StructuralError("slope undefined for constant x values")
    return float(np.dot(xc, ys - ys.mean()) / denom)


@dataclass(frozen=True)
class FidelityCurve:
    ratios: tuple
    f_plus: tuple
    f_minus: tuple
    slope_plus: float
    slope_minus: float


def _drop_pairs(graph: Graph, pairs_to_drop) -> Graph:
    """Rebuild the graph without the given undirected pairs (self-loops kept)."""
    if len(pairs_to_drop) == 0:
        return graph
    pairs = graph.undirected_pairs()
    keys = pairs[:, 0] * graph.num_nodes + pairs[:, 1]
    drop = np.asarray(pairs_to_drop)[:, 0] * graph.num_nodes + np.asarray(pairs_to_drop)[:, 1]
    return build_graph(graph.num_nodes, pairs[~np.isin(keys, drop)])


def rank_pairs_by_attention(graph: Graph, averaged) -> np.ndarray:
    """Undirected non-self-loop pairs ordered most-important first.

    A pair's importance is the mean of its two directed head-averaged weights;
    ties broken toward the earlier pair in (u, v) order.
    """
    n = graph.num_nodes
    fwd = np.flatnonzero(graph.dst < graph.col_indices)
    # twin lookup: slots are sorted by dst*n+col, so the reverse slot of
    # (i, j) is found by searching for j*n+i
    keys = graph.dst * n + graph.col_indices
    rev = np.searchsorted(keys, graph.col_indices[fwd] * n + graph.dst[fwd])
    averaged = np.asarray(averaged)
    score = 0.5 * (averaged[fwd] + averaged[rev])
    order = np.argsort(-score, kind="stable")
    return np.column_stack([graph.dst[fwd], graph.col_indices[fwd]])[order]


def fidelity_curve(
    dataset: Dataset,
    params: ModelParams,
    attention: AttentionState,
    ratios=DEFAULT_RATIOS,
) -> FidelityCurve:
    """Retained accuracy on originally-correct test nodes as edges are removed.

    For each ratio r, the top (f_plus) or bottom (f_minus) floor(r * pairs)
    non-self-loop pairs by attention rank are removed and the model re-run;
    the ranking is computed once, so removal sets are nested across ratios.
    Slopes are ordinary least squares of the curve against r.
    """
    if any(r < 0 or r > 0.5 for r in ratios):
        raise StructuralError("ratios must lie in [0, 0.5]")
    g, x, y = dataset.graph, dataset.features, dataset.labels
    _, probs = forward(g, x, params)
    test_idx = np.flatnonzero(dataset.split.test)
    if test_idx.size == 0:
        raise EvaluationError("no test nodes")
    correct = test_idx[np.argmax(probs[test_idx], axis=1) == y[test_idx]]
    if correct.size == 0:
        raise EvaluationError("no correctly-classified test nodes")

    ranked = rank_pairs_by_attention(g, attention.averaged)
    n_pairs = len(ranked)
    f_plus, f_minus = [], []
    for r in ratios:
        n_drop = int(np.floor(r * n_pairs))
        for bucket, chosen in ((f_plus, ranked[:n_drop]), (f_minus, ranked[n_pairs - n_drop :])):
            sub = _drop_pairs(g, chosen)
            _, p = forward(sub, x, params)
            bucket.append(float(np.mean(np.argmax(p[correct], axis=1) == y[correct])))

    return FidelityCurve(
        tuple(float(r) for r in ratios),
        tuple(f_plus),
        tuple(f_minus),
        ols_slope(ratios, f_plus),
        ols_slope(ratios, f_minus),
    )


def random_removal_curve(dataset: Dataset, params: ModelParams, ratios=DEFAULT_RATIOS, seed: int = 0):
    """Retained accuracy when the same pair counts are removed at random.

    Diagnostic baseline for the ranked curves: an f_minus that drops below
    this line means "unimportant" edges mattered more than random ones.
    Pairs are shuffled once, so removal sets nest across ratios.
    """
    g, x, y = dataset.graph, dataset.features, dataset.labels
    _, probs = forward(g, x, params)
    test_idx = np.flatnonzero(dataset.split.test)
    if test_idx.size == 0:
        raise EvaluationError("no test nodes")
    correct = test_idx[np.argmax(probs[test_idx], axis=1) == y[test_idx]]
    if correct.size == 0:
        raise EvaluationError("no correctly-classified test nodes")
    pairs = g.undirected_pairs()
    shuffled = pairs[np.random.default_rng(seed).permutation(len(pairs))]
    values = []
    for r in ratios:
        n_drop = int(np.floor(r * len(pairs)))
        sub = _drop_pairs(g, shuffled[:n_drop])
        _, p = forward(sub, x, params)
        values.append(float(np.mean(np.argmax(p[correct], axis=1) == y[correct])))
    return tuple(values)


def stability_report(dataset: Dataset, params: ModelParams, attack_spec: AttackSpec, seeds=(0, 1, 2, 3, 4)) -> dict:
    """Test F1 and the two shift metrics before vs after injection, per seed.

    Each seed re-draws the attack (wiring and feature PGD); returns per-seed
    values plus mean/std for every quantity.
    """
    g, x, y = dataset.graph, dataset.features, dataset.labels
    att, probs = forward(g, x, params)
    f1_clean = micro_f1(probs, y, dataset.split.test)
    n = g.num_nodes

    rows = {"f1": [], "f1_attacked": [], "g_tvd": [], "g_jsd": []}
    for seed in seeds:
        result = inject_attack(dataset, params, AttackSpec(
            attack_spec.n_nodes, attack_spec.n_edges, attack_spec.feature_bound,
            attack_spec.pgd_steps, attack_spec.pgd_step_size, seed,
        ))
        pd = result.perturbed
        att_a, probs_a = forward(pd.graph, pd.features, params)
        rows["f1"].append(f1_clean)
        rows["f1_attacked"].append(micro_f1(probs_a, pd.labels, pd.split.test))
        rows["g_tvd"].append(g_tvd(probs, probs_a, np.arange(n)))
        rows["g_jsd"].append(g_jsd(att.averaged, att_a.averaged, result.edge_map))
    out = {"seed_list": list(seeds)}
    for key, vals in rows.items():
        out[key] = {
            "values": vals,
            "mean": float(np.mean(vals)),
            "std": float(np.std(vals)),
        }
    return out
