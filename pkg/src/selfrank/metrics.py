"""LCC, SROCC, MAE and the root-mean-square 'MSE' used for counting."""
import numpy as np


class DegenerateInput(ValueError):
    pass


def _pair(y, yhat, min_len):
    y = np.asarray(y, dtype=np.float64).ravel()
    yhat = np.asarray(yhat, dtype=np.float64).ravel()
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.size} vs {yhat.size}")
    if y.size < min_len:
        raise ValueError(f"need at least {min_len} values, got {y.size}")
    return y, yhat


def lcc(y, yhat) -> float:
    """Pearson linear correlation coefficient."""
    y, yhat = _pair(y, yhat, 2)
    dy = y - y.mean()
    dp = yhat - yhat.mean()
    sy = np.sqrt(np.dot(dy, dy))
    sp = np.sqrt(np.dot(dp, dp))
    if sy == 0 or sp == 0:
        raise DegenerateInput("LCC undefined for a constant series")
    r = float(np.dot(dy, dp) / (sy * sp))
    return min(1.0, max(-1.0, r))


def rankdata(x) -> np.ndarray:
    """1-based ranks, ties receiving the average of the ranks they span."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    ranks = np.empty(x.size)
    start = 0
    n = x.size
    while start < n:
        stop = start + 1
        while stop < n and sx[stop] == sx[start]:
            stop += 1
        ranks[order[start:stop]] = 0.5 * (start + 1 + stop)
        start = stop
    return ranks


def srocc(y, yhat) -> float:
    """Spearman rank-order correlation.

    Without ties this is 1 - 6 sum d^2 / (N (N^2 - 1)); with ties it is the
    Pearson correlation of averaged ranks.
    """
    y, yhat = _pair(y, yhat, 2)
    v = rankdata(y)
    p = rankdata(yhat)
    n = y.size
    if np.unique(y).size == n and np.unique(yhat).size == n:
        d = v - p
        return float(1.0 - 6.0 * np.dot(d, d) / (n * (n * n - 1.0)))
    if np.all(y == y[0]) or np.all(yhat == yhat[0]):
        raise DegenerateInput("SROCC undefined for a constant series")
    return lcc(v, p)


def mae_mse(y, yhat):
    """(MAE, MSE) where MSE is sqrt(mean squared error), as used for counting."""
    y, yhat = _pair(y, yhat, 1)
    e = y - yhat
    return float(np.mean(np.abs(e))), float(np.sqrt(np.mean(e * e)))


def all_metrics(y, yhat) -> dict:
    mae, mse = mae_mse(y, yhat)
    out = {"MAE": mae, "MSE": mse}
    for name, fn in (("LCC", lcc), ("SROCC", srocc)):
        try:
            out[name] = fn(y, yhat)
        except (DegenerateInput, ValueError):
            out[name] = float("nan")
    return out
