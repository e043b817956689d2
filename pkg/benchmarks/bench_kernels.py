"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the median time of each backend, the speedup
and the largest absolute difference between their outputs.
"""
import argparse
import statistics
import time

import numpy as np

from selfrank import _backend, _fallback
from selfrank.network import Network
from selfrank.ranking import MiniBatch, RankingConfig, comparability_labels, multitask_loss

try:
    from selfrank import _kernels
except ImportError:
    _kernels = None


def timed(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times), out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    if np.isscalar(a) or np.ndim(a) == 0:
        return abs(float(a) - float(b))
    return float(np.max(np.abs(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64))))


def cases(rng):
    x = rng.random((50, 8, 32, 32))
    w = rng.normal(size=(16, 8, 3, 3))
    b = rng.normal(size=16)
    dy = rng.normal(size=(50, 16, 32, 32))
    px = rng.normal(size=(50, 16, 32, 32))
    s = rng.normal(size=50)
    g = np.repeat(np.arange(10), 5)
    lab = np.where(g[:, None] == g[None, :], np.sign(np.subtract.outer(np.arange(50), np.arange(50))) * -1.0, 0.0)
    return {
        "conv2d_forward 50x8x32x32 -> 16": lambda k: k.conv2d_forward(x, w, b),
        "conv2d_backward": lambda k: k.conv2d_backward(dy, x, w),
        "maxpool2_forward 50x16x32x32": lambda k: k.maxpool2_forward(px),
        "maxpool2_backward": lambda k, idx=_fallback.maxpool2_forward(px)[1]: k.maxpool2_backward(dy[:, :, ::2, ::2].copy(), idx),
        "pair_coefficients M=50": lambda k: k.pair_coefficients(s, lab, 0.1),
    }


def training_step(repeat):
    """One multitask forward/backward at desk scale (25 labeled + 5 groups of 5)."""
    rng = np.random.default_rng(1)
    net = Network((1, 32, 32), "conv:8,relu,pool,conv:16,relu,pool,conv:16,relu,conv:1", seed=0)
    images = rng.random((50, 1, 32, 32))
    gids = np.concatenate([np.full(25, -1), np.repeat(np.arange(5), 5)])
    lab = comparability_labels(gids, np.concatenate([np.zeros(25), np.tile(np.arange(5.0), 5)]))
    batch = MiniBatch(images, rng.random((50, 1, 8, 8)), gids < 0, lab)
    out = {}
    for name in ("numpy", "cython"):
        _backend.use(name)
        out[name] = timed(lambda: (net.params.clear_grad(), multitask_loss(batch, net, RankingConfig()))[1].total,
                          repeat)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    if _kernels is None:
        raise SystemExit("compiled kernels are not built; run: pip install -e . --no-build-isolation")
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'numpy ms':>9s} {'cython ms':>9s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases(rng).items():
        tn, on = timed(lambda: fn(_fallback), args.repeat)
        tc, oc = timed(lambda: fn(_kernels), args.repeat)
        print(f"{name:36s} {1e3 * tn:9.2f} {1e3 * tc:9.2f} {tn / tc:7.1f}x {max_diff(on, oc):9.1e}")
    step = training_step(args.repeat)
    (tn, ln), (tc, lc) = step["numpy"], step["cython"]
    print(f"{'multitask training step, batch 50':36s} {1e3 * tn:9.2f} {1e3 * tc:9.2f} {tn / tc:7.1f}x "
          f"{abs(ln - lc):9.1e}")


if __name__ == "__main__":
    main()
