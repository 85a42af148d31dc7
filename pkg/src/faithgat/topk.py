"""Top-k index sets, the overlap ratio between two rankings, and the
L1-on-top-k surrogate loss with frozen-selection subgradients.

Ties are always broken toward the lower index, so every ranking here is a
deterministic total order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True, eq=False)
class TopKSet:
    k: int
    indices: np.ndarray  # rank order, largest entry first


@dataclass(frozen=True)
class OverlapReport:
    k: int
    ratio: float


def _check_k(k: int):
    if k < 1:
        raise StructuralError("k must be >= 1")


def topk_mask(x, k: int) -> np.ndarray:
    """Boolean membership of the k largest entries, ties to the lower index.

    Selection by partition (O(n)), so repeated surrogate-loss evaluations on
    long attention vectors avoid full sorts.
    """
    _check_k(k)
    x = np.asarray(x, dtype=np.float64).ravel()
    n = x.shape[0]
    if k >= n:
        return np.ones(n, dtype=bool)
    pivot = x[np.argpartition(-x, k - 1)[k - 1]]  # k-th largest value
    mask = x > pivot
    shortfall = k - int(mask.sum())
    if shortfall > 0:
        tied = np.flatnonzero(x == pivot)  # ascending, so lower indices win
        mask[tied[:shortfall]] = True
    return mask


def top_k_indices(x, k: int) -> TopKSet:
    """Indices of the k largest entries (lower index wins ties), rank order.

    When k exceeds the vector length, all indices are returned.
    """
    _check_k(k)
    x = np.asarray(x, dtype=np.float64).ravel()
    members = np.flatnonzero(topk_mask(x, k))
    order = np.argsort(-x[members], kind="stable")  # stable keeps index order on ties
    return TopKSet(members.shape[0], members[order].astype(np.int64))


def top_k_overlap(x, x2, k: int) -> OverlapReport:
    """Fraction of shared indices between the two top-k sets.

    k is clamped to the longer vector, so the ratio stays in [0, 1] and the
    self-overlap is exactly 1.
    """
    _check_k(k)
    x = np.asarray(x, dtype=np.float64).ravel()
    x2 = np.asarray(x2, dtype=np.float64).ravel()
    kk = min(k, max(x.shape[0], x2.shape[0]))
    if kk == 0:
        raise StructuralError("both vectors are empty")
    m1 = topk_mask(x, kk)
    m2 = topk_mask(x2, kk)
    shared_range = min(x.shape[0], x2.shape[0])
    shared = int((m1[:shared_range] & m2[:shared_range]).sum())
    return OverlapReport(kk, shared / kk)


def _top_masks(w, w2, k):
    if w.shape != w2.shape:
        raise StructuralError(f"length mismatch: {w.shape} vs {w2.shape}")
    kk = min(k, w.shape[0])
    return topk_mask(w, kk), topk_mask(w2, kk), kk


def topk_surrogate_loss(w, w2, k: int) -> float:
    """L1 gap restricted to the union of both top-k index sets, over 2k.

    Zero exactly when the vectors agree on every index either vector ranks in
    its own top k.
    """
    _check_k(k)
    w = np.asarray(w, dtype=np.float64).ravel()
    w2 = np.asarray(w2, dtype=np.float64).ravel()
    m1, m2, kk = _top_masks(w, w2, k)
    gap = np.abs(w - w2)
    return float((gap[m1].sum() + gap[m2].sum()) / (2 * kk))


def topk_surrogate_grad(w, w2, k: int, wrt: str = "second"):
    """Subgradient of topk_surrogate_loss with the index sets held constant.

    The selection is piecewise constant, so differentiating through a frozen
    selection is the loss's actual subgradient away from set boundaries;
    sign(0) = 0 at exact ties.  `wrt` is "second" (gradient w.r.t. w2) or
    "both" (a (grad_w, grad_w2) pair).
    """
    _check_k(k)
    if wrt not in ("second", "both"):
        raise StructuralError(f"wrt must be 'second' or 'both', got {wrt!r}")
    w = np.asarray(w, dtype=np.float64).ravel()
    w2 = np.asarray(w2, dtype=np.float64).ravel()
    m1, m2, kk = _top_masks(w, w2, k)
    membership = m1.astype(np.float64) + m2
    g2 = np.sign(w2 - w) * membership / (2 * kk)
    if wrt == "second":
        return g2
    return -g2, g2
