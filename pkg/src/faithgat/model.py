"""Sparse multi-head GAT / GATv2 with a hand-derived backward pass.

One attention layer (heads concatenated, ELU) feeding a linear classifier with
row softmax.  Scoring variants:

  gat    score(i <- j) = LeakyReLU(a_dst . z_i + a_src . z_j)
  gatv2  score(i <- j) = a_dst . LeakyReLU(z_i) + a_src . LeakyReLU(z_j)

with z = x W per head.  All arithmetic is float64.  The forward can also run
with an externally supplied per-slot weight matrix ("override") in place of
the softmax output, with no renormalization — that path is what prediction-
stability perturbations and their gradients are computed through.
"""

import json
from dataclasses import dataclass, replace

import numpy as np

from . import backend
from .data import Dataset
from .errors import NumericalError, StructuralError, TrainingError
from .graph import Graph
from .optim import Adam

VARIANTS = ("gat", "gatv2")


@dataclass(frozen=True, eq=False)
class ModelParams:
    variant: str
    weight: np.ndarray  # (H, F, Fp) per-head transform
    attn: np.ndarray  # (H, 2*Fp) scoring vector, [dst half | src half]
    classifier: np.ndarray  # (H*Fp, C)
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise StructuralError(f"unknown variant {self.variant!r}")
        if self.attn.shape != (self.heads, 2 * self.hidden_dim):
            raise StructuralError("attn shape does not match weight shape")
        if self.classifier.shape[0] != self.heads * self.hidden_dim:
            raise StructuralError("classifier rows != heads * hidden_dim")
        for arr in (self.weight, self.attn, self.classifier):
            if not np.all(np.isfinite(arr)):
                raise StructuralError("non-finite parameter entries")

    @property
    def heads(self) -> int:
        return self.weight.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.weight.shape[2]

    @property
    def num_classes(self) -> int:
        return self.classifier.shape[1]

    def copy(self) -> "ModelParams":
        return replace(
            self,
            weight=self.weight.copy(),
            attn=self.attn.copy(),
            classifier=self.classifier.copy(),
        )

    def arrays(self):
        return [self.weight, self.attn, self.classifier]


@dataclass(frozen=True, eq=False)
class AttentionState:
    """Post-softmax weights per head plus their head mean (the interpretation)."""

    per_head: np.ndarray  # (H, E)
    averaged: np.ndarray  # (E,)


@dataclass
class GradientBundle:
    d_weight: np.ndarray
    d_attn: np.ndarray
    d_classifier: np.ndarray
    d_attention: np.ndarray | None = None  # (H, E), only for override runs

    def arrays(self):
        return [self.d_weight, self.d_attn, self.d_classifier]

    def scaled_add(self, other: "GradientBundle", factor: float = 1.0) -> None:
        self.d_weight += factor * other.d_weight
        self.d_attn += factor * other.d_attn
        self.d_classifier += factor * other.d_classifier


def init_params(
    variant: str,
    heads: int,
    in_dim: int,
    hidden_dim: int,
    num_classes: int,
    seed: int,
    leaky_slope: float = 0.2,
) -> ModelParams:
    """Glorot-uniform initialization, fully determined by seed."""
    rng = np.random.default_rng(seed)

    def glorot(*shape):
        limit = np.sqrt(6.0 / (shape[-2] + shape[-1]))
        return rng.uniform(-limit, limit, size=shape)

    weight = glorot(heads, in_dim, hidden_dim)
    attn = glorot(heads, 2, hidden_dim).reshape(heads, 2 * hidden_dim)
    classifier = glorot(heads * hidden_dim, num_classes)
    return ModelParams(variant, weight, attn, classifier, leaky_slope)


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def _leaky_prime(x, slope):
    return np.where(x > 0, 1.0, slope)


def _elu(x):
    return np.where(x > 0, x, np.expm1(x))


def _elu_prime(x):
    return np.where(x > 0, 1.0, np.exp(x))


def _row_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=1, keepdims=True), shifted


def mask_indices(mask, n: int) -> np.ndarray:
    """Normalize a boolean mask or index array to indices; duplicates allowed."""
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.int64)
    if idx.size == 0:
        raise StructuralError("empty node mask")
    if idx.min() < 0 or idx.max() >= n:
        raise StructuralError("mask index out of range")
    return idx


def _check_finite(arr, stage: str):
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"non-finite values at stage: {stage}")


def _forward_cache(graph: Graph, features, params: ModelParams, override=None, dropout=0.0, rng=None):
    x = np.asarray(features, dtype=np.float64)
    if x.shape != (graph.num_nodes, params.in_dim):
        raise StructuralError(
            f"features {x.shape} do not match graph/params ({graph.num_nodes}, {params.in_dim})"
        )
    cache = {"graph": graph, "params": params}

    feat_mask = None
    if dropout > 0.0:
        feat_mask = (rng.random(x.shape) >= dropout) / (1.0 - dropout)
        x = x * feat_mask
    cache["x"] = x
    cache["feat_mask"] = feat_mask

    heads = params.heads
    z = np.empty((heads, graph.num_nodes, params.hidden_dim))
    for h in range(heads):
        np.dot(x, params.weight[h], out=z[h])
    cache["z"] = z

    col, off, dst = graph.col_indices, graph.row_offsets, graph.dst
    if override is None:
        fp = params.hidden_dim
        a_dst, a_src = params.attn[:, :fp], params.attn[:, fp:]
        if params.variant == "gat":
            s_dst = np.einsum("hnf,hf->hn", z, a_dst)
            s_src = np.einsum("hnf,hf->hn", z, a_src)
            raw = s_dst[:, dst] + s_src[:, col]
            scores = _leaky(raw, params.leaky_slope)
            cache["raw"] = raw
        else:
            zl = _leaky(z, params.leaky_slope)
            s_dst = np.einsum("hnf,hf->hn", zl, a_dst)
            s_src = np.einsum("hnf,hf->hn", zl, a_src)
            scores = s_dst[:, dst] + s_src[:, col]
            cache["zl"] = zl
        _check_finite(scores, "attention-scores")
        weights = backend.seg_softmax(scores, off, dst)
        cache["weights"] = weights
        used = weights
        attn_mask = None
        if dropout > 0.0:
            attn_mask = (rng.random(weights.shape) >= dropout) / (1.0 - dropout)
            used = weights * attn_mask
        cache["attn_mask"] = attn_mask
    else:
        override = np.asarray(override, dtype=np.float64)
        if override.shape != (heads, graph.num_slots):
            raise StructuralError(
                f"override shape {override.shape} != ({heads}, {graph.num_slots})"
            )
        used = override
    cache["used_weights"] = used
    cache["override"] = override is not None

    agg = backend.aggregate(used, z, col, off)
    _check_finite(agg, "aggregation")
    hidden_in = agg.transpose(1, 0, 2).reshape(graph.num_nodes, heads * params.hidden_dim)
    hidden = _elu(hidden_in)
    logits = hidden @ params.classifier
    probs, shifted = _row_softmax(logits)
    _check_finite(probs, "prediction-softmax")
    cache.update(hidden_in=hidden_in, hidden=hidden, shifted_logits=shifted, probs=probs)
    return cache


def forward(graph: Graph, features, params: ModelParams):
    """Run the model; returns (AttentionState, probability matrix)."""
    cache = _forward_cache(graph, features, params)
    w = cache["weights"]
    return AttentionState(w, w.mean(axis=0)), cache["probs"]


def forward_with_override(graph: Graph, features, params: ModelParams, override) -> np.ndarray:
    """Aggregate with the given per-slot weights instead of the softmax output."""
    return _forward_cache(graph, features, params, override=override)["probs"]


def _backward(cache, dlogits, d_weights_seed=None, need_dx=False):
    """Backpropagate from a logits gradient (plus optional direct gradient on
    the post-softmax attention weights) to parameters.

    For override runs the attention weights are inputs, so their gradient is
    reported in GradientBundle.d_attention and the score path is skipped.
    """
    graph, params = cache["graph"], cache["params"]
    heads, fp = params.heads, params.hidden_dim
    n = graph.num_nodes
    col, off, dst = graph.col_indices, graph.row_offsets, graph.dst
    z, x = cache["z"], cache["x"]

    d_classifier = cache["hidden"].T @ dlogits
    d_hidden = dlogits @ params.classifier.T
    d_agg_flat = d_hidden * _elu_prime(cache["hidden_in"])
    d_agg = d_agg_flat.reshape(n, heads, fp).transpose(1, 0, 2)

    used = cache["used_weights"]
    d_used, d_z = backend.aggregate_backward(d_agg, used, z, col, dst)
    if d_weights_seed is not None:
        d_used = d_used + d_weights_seed

    d_attn = np.zeros_like(params.attn)
    d_attention = None
    if cache["override"]:
        d_attention = d_used
    else:
        if cache["attn_mask"] is not None:
            d_used = d_used * cache["attn_mask"]
        weights = cache["weights"]
        tmp = weights * d_used
        rowsum = backend.seg_sum(tmp, off)
        de = tmp - weights * rowsum[:, dst]
        a_dst, a_src = params.attn[:, :fp], params.attn[:, fp:]
        if params.variant == "gat":
            draw = de * _leaky_prime(cache["raw"], params.leaky_slope)
            zin = z
        else:
            draw = de
            zin = cache["zl"]
        for h in range(heads):
            g_dst = np.bincount(dst, weights=draw[h], minlength=n)
            g_src = np.bincount(col, weights=draw[h], minlength=n)
            d_attn[h, :fp] = zin[h].T @ g_dst
            d_attn[h, fp:] = zin[h].T @ g_src
            d_zin = np.outer(g_dst, a_dst[h]) + np.outer(g_src, a_src[h])
            if params.variant == "gatv2":
                d_zin = d_zin * _leaky_prime(z[h], params.leaky_slope)
            d_z[h] += d_zin

    d_weight = np.empty_like(params.weight)
    dx = np.zeros_like(x) if need_dx else None
    for h in range(heads):
        d_weight[h] = x.T @ d_z[h]
        if need_dx:
            dx += d_z[h] @ params.weight[h].T
    if need_dx and cache["feat_mask"] is not None:
        dx *= cache["feat_mask"]
    bundle = GradientBundle(d_weight, d_attn, d_classifier, d_attention)
    return (bundle, dx) if need_dx else bundle


def _dlogits_from_dprobs(probs, dprobs):
    # softmax jacobian: dlogit_c = p_c * (dp_c - sum_c' dp_c' p_c')
    inner = np.sum(dprobs * probs, axis=1, keepdims=True)
    return probs * (dprobs - inner)


class MaskedCrossEntropy:
    """Mean cross-entropy over a node mask, as an override-loss objective."""

    def __init__(self, labels, mask, n: int):
        self.labels = np.asarray(labels, dtype=np.int64)
        self.idx = mask_indices(mask, n)

    def value(self, probs) -> float:
        logp = np.log(np.clip(probs[self.idx], 1e-300, None))
        return float(-logp[np.arange(len(self.idx)), self.labels[self.idx]].mean())

    def dlogits(self, probs):
        counts = np.bincount(self.idx, minlength=probs.shape[0]).astype(np.float64)
        onehot = np.zeros_like(probs)
        onehot[np.arange(probs.shape[0]), self.labels] = 1.0
        return (probs - onehot) * counts[:, None] / len(self.idx)


class TvdToReference:
    """Masked total variation distance to a fixed reference matrix.

    Subgradient convention at exact ties: sign(0) = 0.
    """

    def __init__(self, reference, mask):
        self.reference = np.asarray(reference, dtype=np.float64)
        self.idx = mask_indices(mask, self.reference.shape[0])

    def value(self, probs) -> float:
        gap = probs[self.idx] - self.reference[self.idx]
        return float(np.abs(gap).sum() / (2 * len(self.idx)))

    def dlogits(self, probs):
        dprobs = np.zeros_like(probs)
        scale = 1.0 / (2 * len(self.idx))
        np.add.at(dprobs, self.idx, np.sign(probs[self.idx] - self.reference[self.idx]) * scale)
        return _dlogits_from_dprobs(probs, dprobs)


def loss_and_grad(graph: Graph, features, params: ModelParams, labels, mask, dropout=0.0, rng=None):
    """Mean masked cross-entropy and its analytic parameter gradients."""
    objective = MaskedCrossEntropy(labels, mask, graph.num_nodes)
    cache = _forward_cache(graph, features, params, dropout=dropout, rng=rng)
    loss = objective.value(cache["probs"])
    bundle = _backward(cache, objective.dlogits(cache["probs"]))
    return loss, bundle


def grad_wrt_override(graph: Graph, features, params: ModelParams, override, loss) -> np.ndarray:
    """Gradient of a scalar objective (`loss` object) w.r.t. each override entry."""
    cache = _forward_cache(graph, features, params, override=override)
    bundle = _backward(cache, loss.dlogits(cache["probs"]))
    return bundle.d_attention


def micro_f1(probs, labels, mask) -> float:
    """Micro-averaged F1 (= accuracy for single-label multiclass) over the mask."""
    idx = mask_indices(mask, probs.shape[0])
    pred = np.argmax(probs[idx], axis=1)
    return float(np.mean(pred == np.asarray(labels)[idx]))


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 200
    dropout: float = 0.0
    seed: int = 0
    # architecture: one attention layer, 8 heads x 8 hidden units by default
    variant: str = "gat"
    heads: int = 8
    hidden_dim: int = 8


def train_vanilla(dataset: Dataset, hyper: TrainConfig):
    """Adam training of masked cross-entropy; returns best-validation params.

    Full-graph batches, deterministic under `hyper.seed`.  The returned log is
    a list of (epoch, loss, train_f1, val_f1) tuples.
    """
    if hyper.epochs < 1:
        raise StructuralError("epochs must be >= 1")
    params = init_params(
        hyper.variant,
        hyper.heads,
        dataset.features.shape[1],
        hyper.hidden_dim,
        dataset.num_classes,
        hyper.seed,
    )
    return _train_loop(dataset, params, hyper)


def train_model(dataset: Dataset, params: ModelParams, hyper: TrainConfig):
    """Like train_vanilla but starting from explicit initial parameters."""
    if hyper.epochs < 1:
        raise StructuralError("epochs must be >= 1")
    return _train_loop(dataset, params.copy(), hyper)


def _train_loop(dataset: Dataset, params: ModelParams, hyper: TrainConfig):
    g, x, y = dataset.graph, dataset.features, dataset.labels
    rng = np.random.default_rng(hyper.seed + 1)  # dropout stream, unused when dropout=0
    arrays = params.arrays()
    opt = Adam([a.shape for a in arrays], lr=hyper.lr, weight_decay=hyper.weight_decay)
    best_val, best_params = -1.0, params.copy()
    log = []
    for epoch in range(1, hyper.epochs + 1):
        try:
            loss, bundle = loss_and_grad(
                g, x, params, y, dataset.split.train, dropout=hyper.dropout, rng=rng
            )
            if not np.isfinite(loss):
                raise TrainingError("training loss diverged", epoch)
            opt.step(arrays, bundle.arrays())
            _, probs = forward(g, x, params)
        except TrainingError:
            raise
        except NumericalError as exc:
            raise TrainingError(f"training diverged: {exc}", epoch) from exc
        train_f1 = micro_f1(probs, y, dataset.split.train)
        val_f1 = micro_f1(probs, y, dataset.split.val) if dataset.split.val.any() else train_f1
        log.append((epoch, loss, train_f1, val_f1))
        if val_f1 > best_val:
            best_val = val_f1
            best_params = params.copy()
    return best_params, log


def write_training_log(log, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,loss,train_f1,val_f1\n")
        for epoch, loss, tr, va in log:
            fh.write(f"{epoch},{repr(float(loss))},{repr(float(tr))},{repr(float(va))}\n")


PARAMS_FORMAT = "faithgat-params-v1"


def params_to_json(params: ModelParams) -> str:
    doc = {
        "format": PARAMS_FORMAT,
        "variant": params.variant,
        "heads": params.heads,
        "in_dim": params.in_dim,
        "hidden_dim": params.hidden_dim,
        "num_classes": params.num_classes,
        "leaky_slope": params.leaky_slope,
        "weight": params.weight.ravel().tolist(),
        "attn": params.attn.ravel().tolist(),
        "classifier": params.classifier.ravel().tolist(),
    }
    return json.dumps(doc, sort_keys=True)


def params_from_json(text: str) -> ModelParams:
    doc = json.loads(text)
    if doc.get("format") != PARAMS_FORMAT:
        raise StructuralError(f"unsupported params document format: {doc.get('format')!r}")
    h, f, fp, c = doc["heads"], doc["in_dim"], doc["hidden_dim"], doc["num_classes"]
    return ModelParams(
        doc["variant"],
        np.asarray(doc["weight"], dtype=np.float64).reshape(h, f, fp),
        np.asarray(doc["attn"], dtype=np.float64).reshape(h, 2 * fp),
        np.asarray(doc["classifier"], dtype=np.float64).reshape(h * fp, c),
        float(doc["leaky_slope"]),
    )


def save_params(params: ModelParams, path) -> None:
    with open(path, "w") as fh:
        fh.write(params_to_json(params))
        fh.write("\n")


def load_params(path) -> ModelParams:
    with open(path) as fh:
        return params_from_json(fh.read())
