"""Pure NumPy versions of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension. :mod:`selfrank._backend` picks one at import time.
"""
import numpy as np

NAME = "numpy"


def _im2col(x, k):
    n, c, h, w = x.shape
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = np.empty((n, c, k, k, h, w))
    for ki in range(k):
        for kj in range(k):
            cols[:, :, ki, kj] = xp[:, :, ki:ki + h, kj:kj + w]
    return cols.reshape(n, c * k * k, h * w)


def conv2d_forward(x, w, b):
    """Stride-1, zero-padded 'same' convolution (cross-correlation).

    x: (N, C, H, W), w: (F, C, k, k) with odd k, b: (F,) -> (N, F, H, W)
    """
    n, _, h, wd = x.shape
    f, k = w.shape[0], w.shape[2]
    y = np.matmul(w.reshape(f, -1), _im2col(x, k))
    y += b[None, :, None]
    return y.reshape(n, f, h, wd)


def conv2d_backward(dy, x, w):
    """Gradients of :func:`conv2d_forward`. Returns (dx, dw, db)."""
    n, c, h, wd = x.shape
    f, k = w.shape[0], w.shape[2]
    p = k // 2
    cols = _im2col(x, k)
    g = dy.reshape(n, f, h * wd)
    dw = np.matmul(g, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = g.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(f, -1).T, g).reshape(n, c, k, k, h, wd)
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p))
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki:ki + h, kj:kj + wd] += dcols[:, :, ki, kj]
    return np.ascontiguousarray(dxp[:, :, p:p + h, p:p + wd]), dw, db


def maxpool2_forward(x):
    """2x2 max pooling with stride 2. Returns (y, argmax) where argmax in 0..3."""
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, idx.astype(np.int64)


def maxpool2_backward(dy, idx):
    n, c, h2, w2 = dy.shape
    blocks = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(blocks, idx[..., None], dy[..., None], axis=-1)
    dx = blocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(dx.reshape(n, c, h2 * 2, w2 * 2))


def pair_coefficients(scores, labels, margin):
    """Hinge coefficient matrix for all ordered pairs of a mini-batch.

    Returns (a, loss, active) where a[i, j] is d g / d score_i for the pair
    (i, j), loss sums the hinge over unordered comparable pairs, and active
    counts unordered pairs whose hinge is switched on.
    """
    s = np.asarray(scores, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.float64)
    z = lab * (s[:, None] - s[None, :]) + margin
    on = (lab != 0) & (z > 0)
    a = np.where(on, lab, 0.0)
    upper = np.triu(on, 1)
    loss = float(np.sum(z[upper]))
    return a, loss, int(upper.sum())
