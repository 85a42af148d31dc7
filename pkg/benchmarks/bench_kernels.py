#!/usr/bin/env python3
"""Benchmark the compiled edge kernels against the numpy fallback.

Times the individual kernels and a full forward+backward training step on a
synthetic benchmark graph.  Run from the repo root after building the
extension in place:

    python setup.py build_ext --inplace
    PYTHONPATH=src python benchmarks/bench_kernels.py
"""

import argparse
import time

import numpy as np

from faithgat.backend import numpy_ops
from faithgat.data import generate_sbm
from faithgat.model import init_params, loss_and_grad

try:
    from faithgat.backend import _ckernels
except ImportError:
    _ckernels = None


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(impl, g, scores, z, d_out, repeats):
    w = impl.seg_softmax(scores, g.row_offsets, g.dst)
    return {
        "seg_softmax": timeit(lambda: impl.seg_softmax(scores, g.row_offsets, g.dst), repeats),
        "seg_sum": timeit(lambda: impl.seg_sum(w, g.row_offsets), repeats),
        "aggregate": timeit(lambda: impl.aggregate(w, z, g.col_indices, g.row_offsets), repeats),
        "aggregate_backward": timeit(
            lambda: impl.aggregate_backward(d_out, w, z, g.col_indices, g.dst), repeats
        ),
    }


def bench_train_step(ds, repeats):
    import faithgat.backend as be

    params = init_params("gat", 8, ds.features.shape[1], 8, ds.num_classes, seed=0)
    labels = ds.labels

    def step():
        loss_and_grad(ds.graph, ds.features, params, labels, ds.split.train)

    return timeit(step, repeats)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--blocks", type=int, default=5)
    ap.add_argument("--nodes-per-block", type=int, default=200)
    ap.add_argument("--heads", type=int, default=8)
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    ds = generate_sbm(args.blocks, args.nodes_per_block, 0.1, 0.01, 8, 1.0, seed=7)
    g = ds.graph
    rng = np.random.default_rng(0)
    scores = rng.standard_normal((args.heads, g.num_slots))
    z = rng.standard_normal((args.heads, g.num_nodes, args.hidden))
    d_out = rng.standard_normal((args.heads, g.num_nodes, args.hidden))

    print(f"graph: {g.num_nodes} nodes, {g.num_slots} slots, "
          f"{args.heads} heads x {args.hidden} hidden")

    results = {"numpy": bench_kernels(numpy_ops, g, scores, z, d_out, args.repeats)}
    if _ckernels is not None:
        results["compiled"] = bench_kernels(_ckernels, g, scores, z, d_out, args.repeats)
    else:
        print("compiled extension not built; numpy only")

    names = list(results["numpy"])
    header = f"{'kernel':<20} " + " ".join(f"{k:>12}" for k in results) + "  speedup"
    print(header)
    print("-" * len(header))
    for name in names:
        row = f"{name:<20} "
        row += " ".join(f"{results[k][name] * 1e6:>10.1f}us" for k in results)
        if "compiled" in results:
            row += f"  {results['numpy'][name] / results['compiled'][name]:>6.2f}x"
        print(row)

    # end-to-end training step under each backend (backend chosen at import,
    # so re-run with FAITHGAT_KERNELS=numpy / compiled to compare)
    per_step = bench_train_step(ds, max(3, args.repeats // 4))
    import faithgat.backend as be

    print(f"\nfull loss+grad step ({be.KERNEL_BACKEND} backend): {per_step * 1e3:.2f} ms")


if __name__ == "__main__":
    main()
