"""Minimax fine-tuning of a trained model into a faithful-attention variant.

Outer loop: gradient descent on

    total = closeness + s_weight * similarity
          + p_weight * pred_stability + i_weight * interp_stability

where closeness is the masked TVD between the tuned and frozen-vanilla
predictions, similarity the top-k surrogate loss between their attention
vectors, and the two stability terms are inner maximizations over L1-bounded
post-softmax perturbations (projected gradient ascent, restarted each outer
step from a seeded random ball point).  Both inner adversaries perturb the
flattened (heads x slots) attention vector.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import StructuralError, TrainingError
from .graph import Graph
from .model import (
    ModelParams,
    TvdToReference,
    _backward,
    _dlogits_from_dprobs,
    _forward_cache,
    forward,
    forward_with_override,
    grad_wrt_override,
    mask_indices,
)
from .optim import Adam, Sgd
from .projection import project_l1_ball, sample_l1_ball
from .topk import top_k_overlap, topk_surrogate_grad, topk_surrogate_loss

BALL_SLACK = 1e-9


@dataclass(frozen=True)
class FgaiConfig:
    """Hyperparameter surface of the fine-tuning loop.

    `top_k` and `radius` may be left as None and are then resolved against the
    graph: top_k to half the flattened attention length, radius to a 5%
    average per-slot budget (0.05 * slots / average degree).
    """

    similarity_weight: float = 0.8
    pred_stability_weight: float = 1.0
    interp_stability_weight: float = 1.0
    top_k: int | None = None
    radius: float | None = None
    outer_steps: int = 100
    pred_attack_steps: int = 5
    interp_attack_steps: int = 5
    lr: float = 0.01
    pred_attack_step_size: float | None = None
    interp_attack_step_size: float | None = None
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self):
        if min(self.similarity_weight, self.pred_stability_weight, self.interp_stability_weight) < 0:
            raise StructuralError("loss weights must be nonnegative")
        if self.top_k is not None and self.top_k < 1:
            raise StructuralError("top_k must be >= 1")
        if self.radius is not None and self.radius <= 0:
            raise StructuralError("radius must be positive")
        for name in ("outer_steps", "pred_attack_steps", "interp_attack_steps"):
            if getattr(self, name) < 1:
                raise StructuralError(f"{name} must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise StructuralError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")

    @classmethod
    def large_scale_preset(cls, top_k: int, **overrides) -> "FgaiConfig":
        """Heavy stability weights (1e5) for large graphs.

        The surrogate loss divides by 2*top_k, so on graphs where top_k is
        itself ~1e5 these weights give the stability terms O(1) influence.
        """
        base = dict(
            similarity_weight=0.8,
            pred_stability_weight=1e5,
            interp_stability_weight=1e5,
            top_k=top_k,
        )
        base.update(overrides)
        return cls(**base)

    def resolve(self, graph: Graph, heads: int) -> "FgaiConfig":
        """Fill in graph-dependent defaults; returns a fully concrete config."""
        top_k = self.top_k
        if top_k is None:
            top_k = math.ceil(0.5 * heads * graph.num_slots)
        radius = self.radius
        if radius is None:
            avg_degree = graph.num_slots / graph.num_nodes
            radius = 0.05 * graph.num_slots / avg_degree
        pred_step = self.pred_attack_step_size
        if pred_step is None:
            pred_step = 2.5 * radius / self.pred_attack_steps
        interp_step = self.interp_attack_step_size
        if interp_step is None:
            interp_step = 2.5 * radius / self.interp_attack_steps
        return replace(
            self,
            top_k=top_k,
            radius=radius,
            pred_attack_step_size=pred_step,
            interp_attack_step_size=interp_step,
        )


@dataclass
class FgaiLossBreakdown:
    closeness: float
    similarity: float
    pred_stability: float
    interp_stability: float
    total: float


def tvd_loss(p, q, mask) -> float:
    """Masked total variation distance: sum |p - q| over masked rows / (2 |mask|)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise StructuralError(f"shape mismatch: {p.shape} vs {q.shape}")
    idx = mask_indices(mask, p.shape[0])
    return float(np.abs(p[idx] - q[idx]).sum() / (2 * len(idx)))


def _check_ball(vec, radius: float, what: str):
    l1 = np.abs(vec).sum()
    if l1 > radius + BALL_SLACK:
        raise StructuralError(f"{what} left the L1 ball: {l1} > {radius}")


def pgd_pred_perturbation(
    graph: Graph, features, params: ModelParams, node_mask, config: FgaiConfig, init=None
) -> np.ndarray:
    """Ascend TVD(y(w), y(w + d)) over the L1 ball; returns the final iterate d.

    The model's own attention is the anchor.  `init` defaults to zero; note
    that the exact tie at zero has a zero subgradient (sign(0) = 0), so a
    caller that wants the ascent to move must supply a nonzero start (the
    trainer passes a seeded random ball point).
    """
    cfg = config.resolve(graph, params.heads)
    att, probs_ref = forward(graph, features, params)
    objective = TvdToReference(probs_ref, node_mask)
    delta = np.zeros_like(att.per_head) if init is None else project_l1_ball(init, cfg.radius)
    for step in range(cfg.pred_attack_steps):
        grad = grad_wrt_override(graph, features, params, att.per_head + delta, objective)
        if not np.all(np.isfinite(grad)):
            raise TrainingError("non-finite prediction-perturbation gradient", step + 1)
        delta = project_l1_ball(delta + cfg.pred_attack_step_size * grad, cfg.radius)
        _check_ball(delta, cfg.radius, "prediction perturbation")
    return delta


def pgd_interp_perturbation(attention_flat, top_k: int, radius: float,
                            step_size: float, steps: int, init=None) -> np.ndarray:
    """Ascend the top-k surrogate loss between a vector and its perturbed copy.

    Same zero-subgradient caveat as pgd_pred_perturbation applies at init=0.
    """
    w = np.asarray(attention_flat, dtype=np.float64).ravel()
    rho = np.zeros_like(w) if init is None else project_l1_ball(init.ravel(), radius)
    for step in range(steps):
        grad = topk_surrogate_grad(w, w + rho, top_k, wrt="second")
        if not np.all(np.isfinite(grad)):
            raise TrainingError("non-finite interpretation-perturbation gradient", step + 1)
        rho = project_l1_ball(rho + step_size * grad, radius)
        _check_ball(rho, radius, "interpretation perturbation")
    return rho


def _masked_tvd_dprobs(p, q, idx):
    """d/dp of tvd_loss(p, q, idx); sign(0) = 0 at ties."""
    dp = np.zeros_like(p)
    np.add.at(dp, idx, np.sign(p[idx] - q[idx]) / (2 * len(idx)))
    return dp


def _step_loss_and_grad(graph, x, params, van_probs, van_flat, delta, rho, cfg, mask_idx):
    """Loss breakdown and parameter gradient for one outer step, with the two
    perturbations held fixed.

    The two surrogate terms differentiate their frozen-reference side only
    (the clean copy), matching the subgradient convention the inner ascent
    uses; the prediction-stability TVD chains through both its branches.
    """
    s_w, p_w, i_w = cfg.similarity_weight, cfg.pred_stability_weight, cfg.interp_stability_weight
    cache = _forward_cache(graph, x, params)
    att = cache["weights"]
    probs = cache["probs"]
    att_flat = att.ravel()

    cache_pert = _forward_cache(graph, x, params, override=att + delta)
    probs_pert = cache_pert["probs"]

    closeness = tvd_loss(probs, van_probs, mask_idx)
    similarity = topk_surrogate_loss(van_flat, att_flat, cfg.top_k)
    pred_stab = tvd_loss(probs, probs_pert, mask_idx)
    interp_stab = topk_surrogate_loss(att_flat, att_flat + rho, cfg.top_k)
    total = closeness + s_w * similarity + p_w * pred_stab + i_w * interp_stab
    breakdown = FgaiLossBreakdown(closeness, similarity, pred_stab, interp_stab, total)

    # perturbed branch: TVD gradient w.r.t. the perturbed predictions flows
    # back through the override path (delta is a constant here)
    dp_pert = p_w * _masked_tvd_dprobs(probs_pert, probs, mask_idx)
    bundle_pert = _backward(cache_pert, _dlogits_from_dprobs(probs_pert, dp_pert))

    # clean branch: prediction gradients from the closeness and stability
    # terms, plus direct attention gradients from the two surrogate terms
    # and the override seed coming back from the perturbed branch
    dp_clean = _masked_tvd_dprobs(probs, van_probs, mask_idx)
    dp_clean += p_w * _masked_tvd_dprobs(probs, probs_pert, mask_idx)
    d_att = s_w * topk_surrogate_grad(van_flat, att_flat, cfg.top_k, wrt="second")
    d_att += i_w * topk_surrogate_grad(att_flat, att_flat + rho, cfg.top_k, wrt="second")
    d_att = d_att.reshape(att.shape) + bundle_pert.d_attention
    bundle = _backward(cache, _dlogits_from_dprobs(probs, dp_clean), d_weights_seed=d_att)
    bundle.scaled_add(bundle_pert)
    return breakdown, bundle, att


def fgai_train(dataset: Dataset, vanilla: ModelParams, config: FgaiConfig):
    """Fine-tune a copy of `vanilla` toward faithful attention.

    Deterministic under config.seed (the loop itself draws no randomness; the
    seed is recorded for provenance).  Returns the tuned parameters and a
    per-step FgaiLossBreakdown list.
    """
    graph, x = dataset.graph, dataset.features
    cfg = config.resolve(graph, vanilla.heads)
    mask_idx = mask_indices(dataset.train_val_mask, graph.num_nodes)
    rng = np.random.default_rng(cfg.seed)  # inner-PGD restart points

    van_att, van_probs = forward(graph, x, vanilla)
    van_flat = van_att.per_head.ravel()

    params = vanilla.copy()
    arrays = params.arrays()
    if cfg.optimizer == "adam":
        opt = Adam([a.shape for a in arrays], lr=cfg.lr)
    else:
        opt = Sgd([a.shape for a in arrays], lr=cfg.lr)

    log: list[FgaiLossBreakdown] = []

    for step in range(1, cfg.outer_steps + 1):
        att, _ = forward(graph, x, params)

        # restart both adversaries from seeded random ball points: the exact
        # tie at zero has a zero subgradient and would freeze the ascent
        size = att.per_head.size
        delta = pgd_pred_perturbation(
            graph, x, params, mask_idx, cfg,
            init=sample_l1_ball(rng, size, cfg.radius).reshape(att.per_head.shape),
        )
        rho = pgd_interp_perturbation(
            att.per_head.ravel(), cfg.top_k, cfg.radius,
            cfg.interp_attack_step_size, cfg.interp_attack_steps,
            init=sample_l1_ball(rng, size, cfg.radius),
        )

        breakdown, bundle, _ = _step_loss_and_grad(
            graph, x, params, van_probs, van_flat, delta, rho, cfg, mask_idx
        )
        if not np.isfinite(breakdown.total):
            raise TrainingError("non-finite fine-tuning loss", step)
        log.append(breakdown)
        opt.step(arrays, bundle.arrays())

    return params, log


def write_fgai_log(log, path) -> None:
    with open(path, "w") as fh:
        fh.write("step,closeness,similarity,pred_stability,interp_stability,total\n")
        for i, row in enumerate(log, start=1):
            fields = (row.closeness, row.similarity, row.pred_stability,
                      row.interp_stability, row.total)
            fh.write(f"{i}," + ",".join(repr(float(v)) for v in fields) + "\n")


def faithfulness_report(
    dataset: Dataset,
    vanilla: ModelParams,
    tuned: ModelParams,
    config: FgaiConfig,
    trials: int,
    seed: int,
    metric_k: int | None = None,
) -> dict:
    """Measure the four faithfulness quantities for a tuned model.

    interp_similarity and pred_closeness compare against the vanilla model;
    interp_stability (worst top-k overlap) and pred_stability (worst TVD) probe
    `trials` random L1-ball perturbations of the tuned model's attention.
    Overlaps are computed on head-averaged attention with k defaulting to half
    the slot count; TVDs cover all nodes.
    """
    if trials < 1:
        raise StructuralError("trials must be >= 1")
    graph, x = dataset.graph, dataset.features
    cfg = config.resolve(graph, tuned.heads)
    if metric_k is None:
        metric_k = math.ceil(0.5 * graph.num_slots)
    all_nodes = np.arange(graph.num_nodes)
    rng = np.random.default_rng(seed)

    van_att, van_probs = forward(graph, x, vanilla)
    att, probs = forward(graph, x, tuned)

    interp_similarity = top_k_overlap(att.averaged, van_att.averaged, metric_k).ratio
    pred_closeness = tvd_loss(probs, van_probs, all_nodes)

    worst_overlap, worst_tvd = 1.0, 0.0
    size = att.per_head.size
    for _ in range(trials):
        delta = sample_l1_ball(rng, size, cfg.radius).reshape(att.per_head.shape)
        shifted = forward_with_override(graph, x, tuned, att.per_head + delta)
        worst_tvd = max(worst_tvd, tvd_loss(probs, shifted, all_nodes))
        rho = sample_l1_ball(rng, size, cfg.radius).reshape(att.per_head.shape)
        perturbed_avg = (att.per_head + rho).mean(axis=0)
        worst_overlap = min(worst_overlap, top_k_overlap(att.averaged, perturbed_avg, metric_k).ratio)

    # per-node diagnostic: overlap of each node's own attention row at half
    # its degree (the losses themselves are global; this is report-only)
    per_node = []
    off = graph.row_offsets
    for i in range(graph.num_nodes):
        lo, hi = off[i], off[i + 1]
        k_node = max(1, math.ceil(0.5 * (hi - lo)))
        per_node.append(top_k_overlap(att.averaged[lo:hi], van_att.averaged[lo:hi], k_node).ratio)

    return {
        "interp_similarity": interp_similarity,
        "interp_stability": worst_overlap,
        "pred_closeness": pred_closeness,
        "pred_stability": worst_tvd,
        "per_node_interp_similarity_mean": float(np.mean(per_node)),
        "per_node_interp_similarity_min": float(np.min(per_node)),
        "metric_k": metric_k,
        "radius": cfg.radius,
        "trials": trials,
    }
