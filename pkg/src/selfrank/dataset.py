"""Persist a generated task to disk and read it back.

Layout of a dataset directory::

    splits.csv           split, index, image_path, target
    scenes/*.pgm         train / pool / test images (counting scenes carry a
                         sidecar .csv of blob centres)
    manifest.csv         group_id, member_index, phi, image_path
    groups/*.pgm         ranked-group members
"""
from __future__ import annotations

import os

import numpy as np

from . import crops as cropgen
from .experiments import TaskData, counting_targets, quality_targets
from .groups import RankedGroup
from .io import read_csv, read_manifest, read_pnm, resolve, write_csv, write_manifest, write_pnm

SPLITS = ("train", "pool", "test")
SPLIT_COLUMNS = ("split", "index", "image_path", "target")


def save_dataset(data: TaskData, root) -> dict:
    """Write everything; returns {'groups': G, 'pairs': P} for reporting."""
    os.makedirs(os.path.join(root, "scenes"), exist_ok=True)
    os.makedirs(os.path.join(root, "groups"), exist_ok=True)
    arrays = {"train": (data.train_x, data.train_y), "pool": (data.pool_x, data.pool_y),
              "test": (data.test_x, data.test_y)}
    rows = []
    for split in SPLITS:
        x, y = arrays[split]
        for i in range(x.shape[0]):
            rel = f"scenes/{split}_{i:05d}"
            if data.task == "counting":
                cropgen.save_scene(data.scenes[split][i], os.path.join(root, rel))
            else:
                write_pnm(os.path.join(root, rel + ".pgm"), x[i, 0])
            rows.append((split, i, rel + ".pgm", float(y[i])))
    write_csv(os.path.join(root, "splits.csv"), SPLIT_COLUMNS, rows)
    mrows = []
    pairs = 0
    for gid, g in enumerate(data.groups):
        pairs += len(g.pairs())
        for m, (phi, img) in enumerate(zip(g.phis, g.images)):
            rel = f"groups/g{gid:05d}_{m}.pgm"
            write_pnm(os.path.join(root, rel), img)
            mrows.append((gid, m, float(phi), rel))
    write_manifest(os.path.join(root, "manifest.csv"), mrows)
    return {"groups": len(data.groups), "pairs": pairs}


def load_dataset(root, task, cfg, net) -> TaskData:
    """Rebuild a TaskData from ``root``; targets are recomputed for ``net``."""
    path = os.path.join(root, "splits.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path}: no dataset here")
    by_split = {s: [] for s in SPLITS}
    for r in read_csv(path):
        if r["split"] not in by_split:
            raise ValueError(f"{path}: unknown split {r['split']!r}")
        by_split[r["split"]].append((int(r["index"]), r["image_path"], float(r["target"])))
    images, ys, scenes = {}, {}, {}
    for split, items in by_split.items():
        items.sort()
        if task == "counting":
            scenes[split] = [cropgen.load_scene(resolve(root, p)[:-4]) for _, p, _ in items]
            imgs = [sc.image for sc in scenes[split]]
        else:
            imgs = [read_pnm(resolve(root, p)) for _, p, _ in items]
        images[split] = np.stack(imgs)[:, None] if imgs else np.zeros((0, 1, 1, 1))
        ys[split] = np.array([t for _, _, t in items], dtype=np.float64)
    if task == "counting":
        t_train = counting_targets([sc.points for sc in scenes["train"]], cfg, net)
        t_pool = counting_targets([sc.points for sc in scenes["pool"]], cfg, net)
    else:
        t_train, t_pool = quality_targets(ys["train"], net), quality_targets(ys["pool"], net)
    groups = []
    manifest = os.path.join(root, "manifest.csv")
    if os.path.exists(manifest):
        for gid, members in sorted(read_manifest(manifest).items()):
            groups.append(RankedGroup(gid, [phi for _, phi, _ in members],
                                      [read_pnm(resolve(root, p)) for _, _, p in members]))
    return TaskData(task, images["train"], t_train, ys["train"], images["pool"], t_pool, ys["pool"],
                    images["test"], ys["test"], groups, scenes, [im[0] for im in images["pool"]])
