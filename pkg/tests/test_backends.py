"""Kernel backends against a naive pure-Python reference, and against each
other when the compiled extension is available."""

import numpy as np
import pytest

from faithgat.backend import KERNEL_BACKEND, numpy_ops
from conftest import random_graph

try:
    from faithgat.backend import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = [("numpy", numpy_ops)] + ([("compiled", _ckernels)] if _ckernels else [])


def naive_seg_softmax(scores, offsets):
    out = np.empty_like(scores)
    for h in range(scores.shape[0]):
        for i in range(len(offsets) - 1):
            seg = scores[h, offsets[i] : offsets[i + 1]]
            ex = np.exp(seg - seg.max())
            out[h, offsets[i] : offsets[i + 1]] = ex / ex.sum()
    return out


def naive_aggregate(weights, z, col, offsets):
    h_, n, f = z.shape
    out = np.zeros((h_, n, f))
    for h in range(h_):
        for i in range(n):
            for e in range(offsets[i], offsets[i + 1]):
                out[h, i] += weights[h, e] * z[h, col[e]]
    return out


def naive_aggregate_backward(d_out, weights, z, col, dst):
    h_, n, f = z.shape
    d_w = np.zeros_like(weights)
    d_z = np.zeros_like(z)
    for h in range(h_):
        for e in range(weights.shape[1]):
            d_w[h, e] = d_out[h, dst[e]] @ z[h, col[e]]
            d_z[h, col[e]] += weights[h, e] * d_out[h, dst[e]]
    return d_w, d_z


@pytest.fixture(scope="module")
def kernel_case():
    rng = np.random.default_rng(31)
    g = random_graph(rng, 35)
    heads, fdim = 3, 4
    scores = rng.standard_normal((heads, g.num_slots))
    z = rng.standard_normal((heads, g.num_nodes, fdim))
    d_out = rng.standard_normal((heads, g.num_nodes, fdim))
    return g, scores, z, d_out


@pytest.mark.parametrize("name,impl", BACKENDS, ids=[b[0] for b in BACKENDS])
def test_seg_softmax_matches_naive(name, impl, kernel_case):
    g, scores, z, d_out = kernel_case
    got = impl.seg_softmax(scores, g.row_offsets, g.dst)
    assert np.allclose(got, naive_seg_softmax(scores, g.row_offsets), atol=1e-12)


@pytest.mark.parametrize("name,impl", BACKENDS, ids=[b[0] for b in BACKENDS])
def test_seg_sum_matches_reduceat(name, impl, kernel_case):
    g, scores, z, d_out = kernel_case
    got = impl.seg_sum(scores, g.row_offsets)
    want = np.add.reduceat(scores, g.row_offsets[:-1], axis=1)
    assert np.allclose(got, want, atol=1e-12)


@pytest.mark.parametrize("name,impl", BACKENDS, ids=[b[0] for b in BACKENDS])
def test_aggregate_matches_naive(name, impl, kernel_case):
    g, scores, z, d_out = kernel_case
    w = naive_seg_softmax(scores, g.row_offsets)
    got = impl.aggregate(w, z, g.col_indices, g.row_offsets)
    assert np.allclose(got, naive_aggregate(w, z, g.col_indices, g.row_offsets), atol=1e-12)


@pytest.mark.parametrize("name,impl", BACKENDS, ids=[b[0] for b in BACKENDS])
def test_aggregate_backward_matches_naive(name, impl, kernel_case):
    g, scores, z, d_out = kernel_case
    w = naive_seg_softmax(scores, g.row_offsets)
    d_w, d_z = impl.aggregate_backward(d_out, w, z, g.col_indices, g.dst)
    want_w, want_z = naive_aggregate_backward(d_out, w, z, g.col_indices, g.dst)
    assert np.allclose(d_w, want_w, atol=1e-12)
    assert np.allclose(d_z, want_z, atol=1e-12)


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_backends_agree_on_full_case(kernel_case):
    g, scores, z, d_out = kernel_case
    w1 = numpy_ops.seg_softmax(scores, g.row_offsets, g.dst)
    w2 = _ckernels.seg_softmax(scores, g.row_offsets, g.dst)
    assert np.allclose(w1, w2, atol=1e-14)
    a1 = numpy_ops.aggregate(w1, z, g.col_indices, g.row_offsets)
    a2 = _ckernels.aggregate(w1, z, g.col_indices, g.row_offsets)
    assert np.allclose(a1, a2, atol=1e-14)


def test_selected_backend_is_reported():
    assert KERNEL_BACKEND in ("numpy", "compiled")


@pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")
def test_training_agrees_across_backends_end_to_end():
    """Same tiny training run under each forced backend, via subprocess."""
    import json
    import subprocess
    import sys
    from pathlib import Path

    script = (
        "import json, faithgat as fg\n"
        "from faithgat.backend import KERNEL_BACKEND\n"
        "ds = fg.generate_sbm(2, 15, 0.25, 0.03, 5, 1.2, seed=4)\n"
        "params, log = fg.train_vanilla(ds, fg.TrainConfig(epochs=12, seed=1))\n"
        "print(json.dumps({'backend': KERNEL_BACKEND, 'loss': log[-1][1], 'val': log[-1][3]}))\n"
    )
    results = {}
    for backend in ("numpy", "compiled"):
        env = {
            "PYTHONPATH": str(Path(__file__).resolve().parents[1] / "src"),
            "PATH": "/usr/bin:/bin",
            "FAITHGAT_KERNELS": backend,
        }
        res = subprocess.run([sys.executable, "-c", script], env=env,
                             capture_output=True, text=True)
        assert res.returncode == 0, res.stderr
        results[backend] = json.loads(res.stdout)
        assert results[backend]["backend"] == backend
    assert results["numpy"]["loss"] == pytest.approx(results["compiled"]["loss"], rel=1e-9)
    assert results["numpy"]["val"] == results["compiled"]["val"]
