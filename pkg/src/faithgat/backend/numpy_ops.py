"""Pure-numpy implementations of the per-edge kernels.

Segments are the CSR rows: slot range [offsets[i], offsets[i+1]) holds the
incoming edges of node i.  Every row is non-empty (self-loops), which the
reduceat calls below rely on.  All reductions are sequential per segment, so
results are deterministic.
"""

import numpy as np


def seg_softmax(scores, offsets, dst):
    """Row-wise softmax over segments; scores (H, E) -> weights (H, E)."""
    row_max = np.maximum.reduceat(scores, offsets[:-1], axis=1)
    ex = np.exp(scores - row_max[:, dst])
    denom = np.add.reduceat(ex, offsets[:-1], axis=1)
    return ex / denom[:, dst]


def seg_sum(values, offsets):
    """Per-segment sums; values (H, E) -> (H, N)."""
    return np.add.reduceat(values, offsets[:-1], axis=1)


def aggregate(weights, z, col, offsets):
    """out[h, i, :] = sum over slots e of row i: weights[h, e] * z[h, col[e], :].

    Head-by-head to keep the gathered (E, Fp) temporary small.
    """
    heads, n, fp = z.shape
    out = np.empty((heads, n, fp))
    for h in range(heads):
        msgs = weights[h, :, None] * z[h, col, :]
        out[h] = np.add.reduceat(msgs, offsets[:-1], axis=0)
    return out


def aggregate_backward(d_out, weights, z, col, dst):
    """Backward of `aggregate` w.r.t. weights and z.

    d_w[h, e] = d_out[h, dst[e]] . z[h, col[e]]
    d_z[h, j] = sum over slots e with col[e] = j of weights[h, e] * d_out[h, dst[e]]
    """
    heads, n, fp = z.shape
    d_w = np.empty_like(weights)
    d_z = np.empty_like(z)
    for h in range(heads):
        d_out_e = d_out[h, dst, :]  # (E, Fp)
        d_w[h] = np.einsum("ef,ef->e", d_out_e, z[h, col, :])
        weighted = weights[h, :, None] * d_out_e
        for f in range(fp):
            d_z[h, :, f] = np.bincount(col, weights=weighted[:, f], minlength=n)
    return d_w, d_z
