"""Synthetic blob scenes, density-map targets and nested-crop ranked groups."""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .groups import RankedGroup
from .io import read_csv, read_pnm, write_csv, write_pnm


@dataclass(frozen=True)
class CropGenConfig:
    k: int = 5
    scale: float = 0.75
    r: float = 8.0
    out_size: int = 64
    anchor_mode: str = "area"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0 < self.scale < 1:
            raise ValueError("scale factor must lie in (0, 1)")
        if self.r < 1:
            raise ValueError("anchor divisor r must be >= 1")
        if self.anchor_mode not in ("area", "side"):
            raise ValueError("anchor_mode must be 'area' or 'side'")


@dataclass(frozen=True)
class CropDescriptor:
    cx: float
    cy: float
    side: float

    @property
    def box(self):
        h = self.side / 2
        return self.cx - h, self.cy - h, self.cx + h, self.cy + h

    def count(self, points) -> int:
        """Annotations inside the half-open box [x0, x1) x [y0, y1)."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        x0, y0, x1, y1 = self.box
        inside = (pts[:, 0] >= x0) & (pts[:, 0] < x1) & (pts[:, 1] >= y0) & (pts[:, 1] < y1)
        return int(inside.sum())


@dataclass
class BlobScene:
    image: np.ndarray
    points: np.ndarray  # (count, 2) as (x, y) in pixel units, pixel i spans [i, i + 1)

    @property
    def count(self) -> int:
        return int(self.points.shape[0])


def synth_blob_scene(count=(0, 100), size=64, seed=0, blob_std=1.5, peak=0.8,
                     noise=0.1, centers=None) -> BlobScene:
    """Bright isotropic blobs on a uniform-noise background.

    ``count`` is an exact number or an inclusive (lo, hi) range sampled
    uniformly; ``blob_std`` is a fixed width or a (lo, hi) range sampled once
    per scene. ``centers`` overrides position sampling.
    """
    if isinstance(size, int):
        size = (size, size)
    h, w = size
    if h <= 0 or w <= 0:
        raise ValueError("scene size must be positive")
    rng = np.random.default_rng(seed)
    if isinstance(blob_std, (tuple, list)):
        blob_std = float(rng.uniform(blob_std[0], blob_std[1]))
    if centers is None:
        n = int(rng.integers(count[0], count[1] + 1)) if isinstance(count, (tuple, list)) else int(count)
        pts = np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n)])
    else:
        pts = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    img = rng.uniform(0.0, noise, (h, w))
    if pts.shape[0]:
        xs = np.arange(w) + 0.5
        ys = np.arange(h) + 0.5
        gx = np.exp(-((xs[None, :] - pts[:, :1]) ** 2) / (2 * blob_std ** 2))
        gy = np.exp(-((ys[None, :] - pts[:, 1:]) ** 2) / (2 * blob_std ** 2))
        img = img + peak * np.einsum("nh,nw->hw", gy, gx)
    return BlobScene(np.clip(img, 0.0, 1.0), pts)


def density_target(scene_or_points, shape=None, sigma=4.0, renormalize=False) -> np.ndarray:
    """Sum of unit-mass Gaussians, integrated exactly over each pixel.

    A point whose Gaussian lies inside the frame contributes mass 1. With
    ``renormalize`` every point's in-frame mass is scaled back to 1 so the
    map always sums to the annotation count.
    """
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if isinstance(scene_or_points, BlobScene):
        pts = scene_or_points.points
        shape = shape or scene_or_points.image.shape[:2]
    else:
        pts = np.asarray(scene_or_points, dtype=np.float64).reshape(-1, 2)
    h, w = shape
    if pts.shape[0] == 0:
        return np.zeros((h, w))
    ex = np.arange(w + 1, dtype=np.float64)
    ey = np.arange(h + 1, dtype=np.float64)
    mx = np.diff(ndtr((ex[None, :] - pts[:, :1]) / sigma), axis=1)
    my = np.diff(ndtr((ey[None, :] - pts[:, 1:]) / sigma), axis=1)
    if renormalize:
        mx /= mx.sum(axis=1, keepdims=True)
        my /= my.sum(axis=1, keepdims=True)
    return np.einsum("nh,nw->hw", my, mx)


def sum_pool(dmap, factor) -> np.ndarray:
    """Downsample by summing factor x factor blocks (preserves the total)."""
    h, w = dmap.shape[-2:]
    if h % factor or w % factor:
        raise ValueError(f"map {h}x{w} not divisible by {factor}")
    lead = dmap.shape[:-2]
    return dmap.reshape(*lead, h // factor, factor, w // factor, factor).sum(axis=(-3, -1))


def crop_resize(img, cx, cy, side, out_size) -> np.ndarray:
    """Bilinear resample of the square [cx - side/2, cx + side/2)^2 to out_size^2."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    step = side / out_size
    u = cx - side / 2 + (np.arange(out_size) + 0.5) * step - 0.5
    v = cy - side / 2 + (np.arange(out_size) + 0.5) * step - 0.5
    u = np.clip(u, 0, w - 1)
    v = np.clip(v, 0, h - 1)
    x0 = np.minimum(np.floor(u).astype(int), w - 2) if w > 1 else np.zeros(out_size, int)
    y0 = np.minimum(np.floor(v).astype(int), h - 2) if h > 1 else np.zeros(out_size, int)
    fx = u - x0
    fy = v - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    if img.ndim == 3:
        fx = fx[:, None]
        fy = fy[:, None, None]
    else:
        fy = fy[:, None]
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def anchor_region(width, height, cfg: CropGenConfig):
    """(x0, y0, x1, y1) of the centred anchor region with the image's aspect ratio."""
    f = 1 / np.sqrt(cfg.r) if cfg.anchor_mode == "area" else 1 / cfg.r
    rw, rh = width * f, height * f
    return (width - rw) / 2, (height - rh) / 2, (width + rw) / 2, (height + rh) / 2


def crop_schedule(width, height, anchor, cfg: CropGenConfig) -> list[CropDescriptor]:
    ax, ay = anchor
    half = min(ax, width - ax, ay, height - ay)
    side = 2 * half
    return [CropDescriptor(ax, ay, side * cfg.scale ** j) for j in range(cfg.k)]


def generate_ranked_crops(img, cfg: CropGenConfig, seed=0, source_id=0, anchor=None) -> RankedGroup:
    """Nested square crops around a random anchor, largest first.

    phi is the crop area, so phi decreases along the group and the true count
    never increases.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if min(h, w) < cfg.out_size:
        raise ValueError(f"image {w}x{h} smaller than output size {cfg.out_size}")
    if anchor is None:
        rng = np.random.default_rng(seed)
        x0, y0, x1, y1 = anchor_region(w, h, cfg)
        anchor = (rng.uniform(x0, x1), rng.uniform(y0, y1))
    crops = crop_schedule(w, h, anchor, cfg)
    return RankedGroup(
        source_id,
        [c.side ** 2 for c in crops],
        [crop_resize(img, c.cx, c.cy, c.side, cfg.out_size) for c in crops],
        crops,
    )


def save_scene(scene: BlobScene, stem) -> None:
    write_pnm(f"{stem}.pgm", scene.image)
    write_csv(f"{stem}.csv", ("x", "y"), [(float(x), float(y)) for x, y in scene.points])


def load_scene(stem) -> BlobScene:
    img = read_pnm(f"{stem}.pgm")
    rows = read_csv(f"{stem}.csv") if os.path.exists(f"{stem}.csv") else []
    pts = np.array([[float(r["x"]), float(r["y"])] for r in rows]).reshape(-1, 2)
    return BlobScene(img, pts)
