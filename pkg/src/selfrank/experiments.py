"""Desk-scale experiments: synthetic datasets, training arms and evaluation.

Two tasks share one pipeline:

* ``counting``: blob scenes with exact annotations; the network regresses a
  density map, the ranking head sums it, and unlabeled scenes yield nested
  crop groups.
* ``quality``: synthetic textures distorted at graded levels; the network
  regresses a scalar quality score and unlabeled references yield
  distortion groups.

All images are quantized to 8 bits on creation so that a dataset written to
disk and read back is identical to the in-memory one.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import crops as cropgen
from . import distortions as dist
from .config import ExperimentConfig
from .groups import RankedGroup
from .io import to_bytes8
from .metrics import all_metrics
from .network import Network
from .ranking import LossParts, MiniBatch, comparability_labels, multitask_loss
from .tensor import sgd_step

logger = logging.getLogger(__name__)


class NumericFailure(RuntimeError):
    pass


def derive_seed(seed, *tags) -> int:
    """Stable child seed for a named stochastic component."""
    words = [int(seed)] + [zlib.crc32(str(t).encode()) for t in tags]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def quantize8(img) -> np.ndarray:
    return to_bytes8(img).astype(np.float64) / 255.0


def synth_texture(size, seed) -> np.ndarray:
    """A smooth random grey texture in [0.1, 0.9] used as a reference image."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    img = np.zeros((size, size))
    for _ in range(6):
        f = rng.uniform(1, 8)
        th = rng.uniform(0, np.pi)
        img += rng.uniform(0.2, 1.0) * np.sin(2 * np.pi * f * (xx * np.cos(th) + yy * np.sin(th)) + rng.uniform(0, 2 * np.pi))
    for _ in range(4):
        cx, cy, r = rng.uniform(0, 1), rng.uniform(0, 1), rng.uniform(0.05, 0.25)
        img += rng.uniform(-1.5, 1.5) * (((xx - cx) ** 2 + (yy - cy) ** 2) < r * r)
    img = (img - img.min()) / max(img.max() - img.min(), 1e-12)
    return 0.1 + 0.8 * img


def quality_score(level, levels) -> float:
    """Toy opinion score on a 1..9 scale: 9 for the reference, 1 at the worst level."""
    return 1.0 + 8.0 * (levels - level) / levels


@dataclass
class TaskData:
    """Everything one run needs, as arrays with a channel axis."""

    task: str
    train_x: np.ndarray
    train_t: np.ndarray
    train_y: np.ndarray
    pool_x: np.ndarray
    pool_t: np.ndarray
    pool_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    groups: list = field(default_factory=list)
    scenes: dict = field(default_factory=dict)
    pool_sources: list = field(default_factory=list)

    @property
    def group_size(self) -> int:
        return len(self.groups[0]) if self.groups else 0


def make_network(cfg: ExperimentConfig, seed=None) -> Network:
    return Network((1, cfg.image_size, cfg.image_size), cfg.arch,
                   seed=derive_seed(cfg.seed if seed is None else seed, "init"))


def _stride(cfg, net):
    out = net.output_shape
    if len(out) == 3:
        if cfg.image_size % out[1]:
            raise ValueError("density head resolution must divide the image size")
        return cfg.image_size // out[1]
    return None


def counting_targets(points_list, cfg, net) -> np.ndarray:
    s = cfg.image_size
    factor = _stride(cfg, net)
    out = []
    for pts in points_list:
        if factor is None:
            out.append(np.full(net.output_shape, float(len(pts)) / max(1, int(np.prod(net.output_shape)))))
            continue
        dmap = cropgen.density_target(pts, (s, s), cfg.density_sigma, renormalize=True)
        out.append(cropgen.sum_pool(dmap, factor)[None])
    return np.stack(out)


def crop_sampler(cfg: ExperimentConfig):
    ccfg = cfg.crop_config()

    def sample(img, seed, source_id=0) -> RankedGroup:
        return cropgen.generate_ranked_crops(img, ccfg, seed=seed, source_id=source_id)

    return sample


def distortion_sampler(cfg: ExperimentConfig):
    kinds = [k.strip() for k in cfg.kinds.split(",") if k.strip()]

    def sample(img, seed, source_id=0, kind=None) -> RankedGroup:
        if kind is None:
            kind = kinds[int(np.random.default_rng(seed).integers(len(kinds)))]
        g = dist.build_distortion_group(img, kind, cfg.levels, seed=derive_seed(seed, kind), source_id=source_id)
        g.images = [quantize8(im) for im in g.images]
        return g

    return sample


def sampler_for(cfg):
    return crop_sampler(cfg) if cfg.task == "counting" else distortion_sampler(cfg)


def _stack(imgs):
    return np.stack(imgs)[:, None] if imgs else np.zeros((0, 1, 1, 1))


def build_counting(cfg: ExperimentConfig, net: Network) -> TaskData:
    s = cfg.image_size

    def scenes(split, n):
        return [cropgen.synth_blob_scene((cfg.count_lo, cfg.count_hi), s, derive_seed(cfg.seed, split, i),
                                         blob_std=(cfg.blob_std_lo, cfg.blob_std_hi))
                for i in range(n)]

    train, pool, test = scenes("train", cfg.n_labeled), scenes("pool", cfg.n_unlabeled), scenes("test", cfg.n_test)
    for sc in train + pool + test:
        sc.image = quantize8(sc.image)
    sample = crop_sampler(cfg)
    groups = []
    for i, sc in enumerate(pool):
        for j in range(cfg.groups_per_image):
            g = sample(sc.image, derive_seed(cfg.seed, "crop", i, j), source_id=i)
            g.images = [quantize8(im) for im in g.images]
            groups.append(g)
    return TaskData(
        "counting",
        _stack([sc.image for sc in train]), counting_targets([sc.points for sc in train], cfg, net),
        np.array([sc.count for sc in train], dtype=np.float64),
        _stack([sc.image for sc in pool]), counting_targets([sc.points for sc in pool], cfg, net),
        np.array([sc.count for sc in pool], dtype=np.float64),
        _stack([sc.image for sc in test]), np.array([sc.count for sc in test], dtype=np.float64),
        groups, {"train": train, "pool": pool, "test": test},
        [sc.image for sc in pool],
    )


def _quality_split(cfg, split, n):
    kinds = [k.strip() for k in cfg.kinds.split(",") if k.strip()]
    imgs, ys, meta = [], [], []
    for i in range(n):
        rng = np.random.default_rng(derive_seed(cfg.seed, split, "pick", i))
        ref = synth_texture(cfg.image_size, derive_seed(cfg.seed, split, "ref", i))
        kind = kinds[int(rng.integers(len(kinds)))]
        level = int(rng.integers(0, cfg.levels + 1))
        img = ref if level == 0 else dist.apply_distortion(ref, dist.DistortionSpec(kind, level),
                                                           derive_seed(cfg.seed, split, "dist", i))
        imgs.append(quantize8(img))
        ys.append(quality_score(level, cfg.levels))
        meta.append((kind, level))
    return imgs, np.array(ys), meta, kinds


def quality_targets(y, net) -> np.ndarray:
    """Spread each score evenly over the output so the summed head equals it."""
    shape = net.output_shape
    y = np.asarray(y, dtype=np.float64).reshape((-1,) + (1,) * len(shape))
    return y * np.ones((1,) + shape) / np.prod(shape)


def build_quality(cfg: ExperimentConfig, net: Network) -> TaskData:
    train, train_y, _, _ = _quality_split(cfg, "train", cfg.n_labeled)
    pool, pool_y, _, _ = _quality_split(cfg, "pool", cfg.n_unlabeled)
    test, test_y, _, _ = _quality_split(cfg, "test", cfg.n_test)
    sample = distortion_sampler(cfg)
    refs = [quantize8(synth_texture(cfg.image_size, derive_seed(cfg.seed, "rankref", i)))
            for i in range(cfg.n_unlabeled)]
    kinds = [k.strip() for k in cfg.kinds.split(",") if k.strip()]
    # one group per kind, cycling when groups_per_image exceeds the kind list
    groups = [sample(refs[i], derive_seed(cfg.seed, "dgroup", i, j), source_id=i, kind=kinds[j % len(kinds)])
              for i in range(cfg.n_unlabeled) for j in range(cfg.groups_per_image)]
    return TaskData("quality", _stack(train), quality_targets(train_y, net), train_y,
                    _stack(pool), quality_targets(pool_y, net), pool_y, _stack(test), test_y, groups,
                    pool_sources=pool)


def build_data(cfg: ExperimentConfig, net: Network) -> TaskData:
    return build_counting(cfg, net) if cfg.task == "counting" else build_quality(cfg, net)


class GroupBank:
    """Ranked groups stacked into one array for fast mini-batch assembly."""

    def __init__(self, groups):
        self.k = len(groups[0]) if groups else 0
        self.images = np.stack([g.stack() for g in groups])[:, :, None] if groups else None
        self.phis = np.array([g.phis for g in groups], dtype=np.float64) if groups else None

    def __len__(self):
        return 0 if self.images is None else self.images.shape[0]


def train(net: Network, x, t, cfg: ExperimentConfig, steps: int, bank: GroupBank | None = None,
          seed=0, audit=None, start_step=0) -> list[tuple]:
    """SGD on labeled (x, t), plus ranked groups from ``bank`` when lambda > 0.

    Labeled and ranked sampling use separate random streams, so with
    lambda = 0 (or no bank) the parameter trajectory is that of
    regression-only training.
    """
    sgd = cfg.sgd(steps)
    rcfg = cfg.ranking()
    use_rank = bank is not None and len(bank) > 0 and rcfg.lam > 0 and cfg.batch_ranked > 0
    lab_rng = np.random.default_rng(derive_seed(seed, "labeled"))
    rank_rng = np.random.default_rng(derive_seed(seed, "ranked"))
    n = x.shape[0]
    nb = min(cfg.batch_labeled, n)
    gpb = max(1, cfg.batch_ranked // bank.k) if use_rank else 0
    velocity = {}
    log = []
    for step in range(steps):
        idx = np.sort(lab_rng.choice(n, size=nb, replace=False)) if n else np.zeros(0, int)
        images = [x[idx]]
        m_lab = idx.size
        if use_rank:
            gsel = np.sort(rank_rng.choice(len(bank), size=min(gpb, len(bank)), replace=False))
            images.append(bank.images[gsel].reshape((-1,) + bank.images.shape[2:]))
            gids = np.concatenate([np.full(m_lab, -1), np.repeat(np.arange(gsel.size), bank.k)])
            phis = np.concatenate([np.zeros(m_lab), bank.phis[gsel].ravel()])
            labels = comparability_labels(gids, phis)
        else:
            labels = np.zeros((m_lab, m_lab))
        imgs = np.concatenate(images) if len(images) > 1 else images[0]
        m = imgs.shape[0]
        targets = np.zeros((m,) + t.shape[1:])
        targets[:m_lab] = t[idx]
        labeled = np.zeros(m, dtype=bool)
        labeled[:m_lab] = True
        # overflow on the way to a non-finite loss is reported below, not warned about
        with np.errstate(over="ignore", invalid="ignore"):
            parts = multitask_loss(MiniBatch(imgs, targets, labeled, labels), net, rcfg)
        if not np.isfinite(parts.total):
            raise NumericFailure(f"non-finite loss at step {start_step + step}")
        sgd_step(net.params, sgd, step, velocity)
        if audit is not None:
            audit.log(start_step + step, parts)
        if cfg.log_every and (step % cfg.log_every == 0 or step == steps - 1):
            log.append((start_step + step, parts.reg, parts.rank, parts.total, parts.active_pairs))
    return log


def evaluate(net: Network, x, y) -> dict:
    return all_metrics(y, net.predict(x))


@dataclass
class RunResult:
    cfg: ExperimentConfig
    net: Network
    data: TaskData
    log: list
    test: dict
    train: dict


def run_arm(cfg: ExperimentConfig, data: TaskData | None = None, audit=None) -> RunResult:
    """Train one arm ('baseline' or 'multitask') from scratch and evaluate it."""
    net = make_network(cfg)
    if data is None:
        data = build_data(cfg, net)
    bank = GroupBank(data.groups) if cfg.arm == "multitask" else None
    log = train(net, data.train_x, data.train_t, cfg, cfg.steps, bank, seed=derive_seed(cfg.seed, "train"),
                audit=audit)
    return RunResult(cfg, net, data, log,
                     evaluate(net, data.test_x, data.test_y),
                     evaluate(net, data.train_x, data.train_y))
