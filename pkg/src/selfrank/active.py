"""Certainty from self-supervised ranking, and the iterative labeling loop.

The certainty of the network on an image is the fraction of sampled ranked
pairs generated from it that the network orders correctly. Equal scores count
as wrong, so a constant predictor is maximally uncertain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .experiments import TaskData, derive_seed, evaluate, make_network, sampler_for, train
from .io import write_csv

CYCLE_COLUMNS = ("cycle", "labeled_fraction", "policy", "MAE", "MSE", "LCC", "SROCC", "mean_certainty")


class PoolExhausted(ValueError):
    pass


def sample_pairs(img, sampler, k, seed):
    """K comparable pairs drawn uniformly from freshly generated groups.

    Returns (images, lo, hi): member images of all groups used, and index
    arrays such that image ``lo[p]`` has the smaller phi in pair p.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    first = sampler(img, derive_seed(seed, "group", 0))
    per_group = len(first.pairs())
    if per_group == 0:
        raise ValueError("generator yields groups without comparable pairs")
    groups = [first] + [sampler(img, derive_seed(seed, "group", g)) for g in range(1, math.ceil(k / per_group))]
    images, pairs = [], []
    for g in groups:
        base = len(images)
        images.extend(g.images)
        pairs.extend((base + i, base + j) for i, j in g.pairs())
    if len(pairs) < k:
        raise ValueError(f"generator produced {len(pairs)} pairs, need {k}")
    rng = np.random.default_rng(derive_seed(seed, "pick"))
    chosen = np.sort(rng.choice(len(pairs), size=k, replace=False))
    lo = np.array([pairs[p][0] for p in chosen])
    hi = np.array([pairs[p][1] for p in chosen])
    return np.stack(images), lo, hi


def certainty(net, img, sampler, k, seed) -> float:
    images, lo, hi = sample_pairs(img, sampler, k, seed)
    scores = net.predict(images[:, None] if images.ndim == 3 else images)
    return float(np.mean(scores[lo] < scores[hi]))


def lowest_certainty(ids, scores, s) -> list:
    """The ``s`` ids with the lowest scores; ties go to the smaller id."""
    order = sorted(range(len(ids)), key=lambda i: (scores[i], ids[i]))
    return [ids[i] for i in order[:s]]


@dataclass
class ActiveState:
    labeled: list
    pool: list
    cycle: int = 0


def active_loop(cfg: ExperimentConfig, data: TaskData, policy=None, seed=None, log=None) -> list[dict]:
    """Run the labeling loop on ``data.pool_*`` (the oracle store) and return per-cycle rows.

    Both policies draw the same initial labeled set and use the same training
    seeds; only the choice of images to label differs.
    """
    policy = policy or cfg.al_policy
    if policy not in ("certainty", "random"):
        raise ValueError(f"unknown selection policy {policy!r}")
    seed = cfg.seed if seed is None else seed
    m = data.pool_x.shape[0]
    n0 = max(1, int(round(cfg.al_initial * m)))
    s = max(1, int(round(cfg.al_step * m)))
    if n0 > m:
        raise PoolExhausted(f"initial labeled set {n0} exceeds pool of {m}")
    init_rng = np.random.default_rng(derive_seed(seed, "al-init"))
    first = sorted(int(i) for i in init_rng.choice(m, size=n0, replace=False))
    state = ActiveState(first, [i for i in range(m) if i not in set(first)])
    sampler = sampler_for(cfg)
    net = make_network(cfg, seed)
    rows = []
    for cycle in range(cfg.al_cycles + 1):
        state.cycle = cycle
        if not cfg.al_warm_start:
            net = make_network(cfg, seed)
        idx = np.array(state.labeled)
        train(net, data.pool_x[idx], data.pool_t[idx], cfg, cfg.al_steps, None,
              seed=derive_seed(seed, "al-train", cycle))
        metrics = evaluate(net, data.test_x, data.test_y)
        last = cycle == cfg.al_cycles
        scores = []
        if not last:
            if s > len(state.pool):
                raise PoolExhausted(f"cycle {cycle}: {len(state.pool)} unlabeled images left, need {s}")
            scores = [certainty(net, data.pool_x[i, 0], sampler, cfg.al_k, derive_seed(seed, "al-score", cycle, i))
                      for i in state.pool]
        row = {"cycle": cycle, "labeled_fraction": len(state.labeled) / m, "policy": policy, **metrics,
               "mean_certainty": float(np.mean(scores)) if scores else float("nan")}
        rows.append(row)
        if log:
            log(row)
        if last:
            break
        if policy == "certainty":
            picked = lowest_certainty(state.pool, scores, s)
        else:
            rng = np.random.default_rng(derive_seed(seed, "al-random", cycle))
            picked = [state.pool[i] for i in rng.choice(len(state.pool), size=s, replace=False)]
        chosen = set(picked)
        state.labeled = sorted(state.labeled + picked)
        state.pool = [i for i in state.pool if i not in chosen]
    return rows


def write_cycles(path, rows) -> None:
    write_csv(path, CYCLE_COLUMNS, [[r[c] for c in CYCLE_COLUMNS] for r in rows])
