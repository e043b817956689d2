"""Regression loss, all-pairs hinge ranking loss and the multi-task objective.

The efficient ranking loss pushes each image through the network once and
forms every comparable pair at the loss layer: with ``a`` the hinge
coefficient matrix, the gradient w.r.t. the scores is ``a @ 1``. The naive
variant enumerates pairs one by one and is kept as the reference.

Losses are *summed* over comparable pairs, not averaged; the trade-off
weight ``lam`` absorbs the scale.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _backend


@dataclass(frozen=True)
class RankingConfig:
    margin: float = 0.0
    lam: float = 1.0

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass
class RankingResult:
    loss: float
    grad: np.ndarray
    coeffs: np.ndarray
    passes: int
    active_pairs: int


def comparability_labels(group_ids, phis) -> np.ndarray:
    """l[i, j] = +1 if phi_i <= phi_j, -1 if phi_i > phi_j, within a group; 0 otherwise.

    Members of one group must carry distinct phi values, otherwise the
    relation is not antisymmetric.
    """
    g = np.asarray(group_ids)
    phi = np.asarray(phis, dtype=np.float64)
    same = (g[:, None] == g[None, :]) & (g[:, None] >= 0)
    np.fill_diagonal(same, False)
    if np.any(same & (phi[:, None] == phi[None, :])):
        raise ValueError("two members of one group share the same phi")
    lab = np.where(phi[:, None] <= phi[None, :], 1.0, -1.0)
    return np.where(same, lab, 0.0)


def check_labels(labels) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.float64)
    if lab.ndim != 2 or lab.shape[0] != lab.shape[1]:
        raise ValueError(f"labels must be square, got {lab.shape}")
    if not np.all(np.isin(lab, (-1.0, 0.0, 1.0))):
        raise ValueError("labels must take values in {-1, 0, +1}")
    if np.any(np.diag(lab) != 0):
        raise ValueError("labels must have a zero diagonal")
    if not np.array_equal(lab, -lab.T):
        raise ValueError("labels must be antisymmetric")
    return lab


def regression_loss(pred, target):
    """Mean over samples of the squared error summed within a sample.

    For scalar predictions this is (1/N) sum (y - yhat)^2. Returns
    (loss, d loss / d pred).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if pred.ndim == 0 or pred.shape[0] == 0:
        raise ValueError("regression loss needs at least one sample")
    n = pred.shape[0]
    diff = pred - target
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


def pairwise_hinge(yi, yj, margin=0.0):
    return max(0.0, yi - yj + margin)


def ranking_loss_efficient(scores, labels, margin=0.0) -> RankingResult:
    """All-pairs hinge loss from one score per image.

    The gradient is the row sum of the coefficient matrix; exactly
    ``len(scores)`` network passes are needed to produce the scores.
    """
    s = np.asarray(scores, dtype=np.float64)
    lab = check_labels(labels)
    if lab.shape[0] != s.shape[0]:
        raise ValueError("labels and scores disagree on batch size")
    a, loss, active = _backend.kernels.pair_coefficients(s, lab, float(margin))
    return RankingResult(loss, a.sum(axis=1), a, s.shape[0], active)


def ranking_loss_naive(scores, labels, margin=0.0):
    """Reference: loop over comparable pairs, evaluating both branch gradients.

    Returns (loss, grad, passes) where ``passes`` is what a two-branch Siamese
    implementation would push through the network: two images per pair.
    """
    s = np.asarray(scores, dtype=np.float64)
    lab = check_labels(labels)
    m = s.shape[0]
    loss = 0.0
    grad = np.zeros(m)
    passes = 0
    for i in range(m):
        for j in range(i + 1, m):
            if lab[i, j] == 0:
                continue
            lo, hi = (i, j) if lab[i, j] > 0 else (j, i)
            passes += 2
            v = s[lo] - s[hi] + margin
            if v > 0:
                loss += v
                grad[lo] += 1.0
                grad[hi] -= 1.0
    return loss, grad, passes


def siamese_naive_gradients(net, images, labels, margin=0.0):
    """Two-branch Siamese reference on images: every pair is forwarded separately.

    Returns (loss, flat parameter gradient, forward passes).
    """
    lab = check_labels(labels)
    images = np.asarray(images, dtype=np.float64)
    net.params.zero_grad()
    before = net.images_seen
    loss = 0.0
    m = lab.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            if lab[i, j] == 0:
                continue
            lo, hi = (i, j) if lab[i, j] > 0 else (j, i)
            _, y_lo = net.forward(images[lo:lo + 1])
            net_lo_tape = net._tape
            _, y_hi = net.forward(images[hi:hi + 1])
            v = y_lo[0] - y_hi[0] + margin
            if v > 0:
                loss += v
                net.backward(grad_rank=np.array([-1.0]))
                net._tape = net_lo_tape
                net.backward(grad_rank=np.array([1.0]))
            net._tape = None
    return loss, net.params.flat_grad(), net.images_seen - before


def siamese_efficient_gradients(net, images, labels, margin=0.0):
    """Single pass over the batch, pairs formed at the loss layer."""
    net.params.zero_grad()
    before = net.images_seen
    _, scores = net.forward(images)
    res = ranking_loss_efficient(scores, labels, margin)
    net.backward(grad_rank=res.grad)
    return res.loss, net.params.flat_grad(), net.images_seen - before


@dataclass
class MiniBatch:
    """Images mixing labeled samples and ranked-group members.

    ``targets`` holds a regression target per image (rows of unlabeled images
    are ignored); ``labeled`` marks which rows carry one.
    """

    images: np.ndarray
    targets: np.ndarray | None
    labeled: np.ndarray
    labels: np.ndarray
    group_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        m = self.images.shape[0]
        self.labeled = np.asarray(self.labeled, dtype=bool)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.labeled.shape != (m,) or self.labels.shape != (m, m):
            raise ValueError("labeled mask and comparability labels must match the batch size")
        if self.labeled.any() and (self.targets is None or self.targets.shape[0] != m):
            raise ValueError("labeled members need targets")
        orphan = ~self.labeled & ~np.any(self.labels != 0, axis=1)
        if orphan.any():
            raise ValueError(f"images {np.flatnonzero(orphan).tolist()} have neither a target nor a comparable partner")


@dataclass
class LossParts:
    total: float
    reg: float
    rank: float
    active_pairs: int


def multitask_loss(batch: MiniBatch, net, cfg: RankingConfig) -> LossParts:
    """L = L_reg + lam * L_rank with one forward and one backward pass.

    Parameter gradients are accumulated into ``net.params``.
    """
    has_pairs = bool(np.any(batch.labels != 0))
    if not batch.labeled.any() and not has_pairs:
        raise ValueError("batch has neither targets nor comparable pairs")
    reg_out, scores = net.forward(batch.images)
    grad_reg = np.zeros_like(reg_out)
    l_reg = 0.0
    if batch.labeled.any():
        idx = np.flatnonzero(batch.labeled)
        tgt = np.asarray(batch.targets, dtype=np.float64)[idx].reshape(reg_out[idx].shape)
        l_reg, g = regression_loss(reg_out[idx], tgt)
        grad_reg[idx] = g
    l_rank = 0.0
    active = 0
    grad_rank = None
    if has_pairs:
        res = ranking_loss_efficient(scores, batch.labels, cfg.margin)
        l_rank, active = res.loss, res.active_pairs
        grad_rank = cfg.lam * res.grad
    net.backward(grad_reg=grad_reg, grad_rank=grad_rank)
    return LossParts(l_reg + cfg.lam * l_rank, l_reg, l_rank, active)


class LossAudit:
    """Optional CSV dump: step, L_reg, L_rank, L, active_pair_count."""

    columns = ("step", "L_reg", "L_rank", "L", "active_pair_count")

    def __init__(self, path):
        self.path = os.fspath(path)
        self.rows = []

    def log(self, step, parts: LossParts):
        self.rows.append((step, parts.reg, parts.rank, parts.total, parts.active_pairs))

    def write(self):
        from .io import atomic_write_text
        lines = [",".join(self.columns)]
        lines += [f"{s},{r!r},{k!r},{t!r},{a}" for s, r, k, t, a in self.rows]
        atomic_write_text(self.path, "\n".join(lines) + "\n")
