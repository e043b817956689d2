"""Ranked groups: images derived from one source with ordered parameters phi."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ranking import comparability_labels


@dataclass
class RankedGroup:
    """Members of one group, ordered so that phi is increasing or decreasing.

    A larger phi means a larger true target (higher quality, more people).
    ``descriptors`` holds the per-member transform (distortion spec or crop).
    """

    source_id: int
    phis: list
    images: list = field(default_factory=list)
    descriptors: list = field(default_factory=list)

    def __len__(self):
        return len(self.phis)

    def pairs(self):
        """Comparable ordered pairs (i, j) with phi_i < phi_j."""
        phi = self.phis
        n = len(phi)
        return [(i, j) if phi[i] < phi[j] else (j, i) for i in range(n) for j in range(i + 1, n)]

    def labels(self) -> np.ndarray:
        return comparability_labels(np.zeros(len(self.phis), dtype=int), self.phis)

    def stack(self) -> np.ndarray:
        return np.stack([np.asarray(im, dtype=np.float64) for im in self.images])


def batch_labels(groups) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack several groups into (images, group ids, comparability labels)."""
    imgs, gids, phis = [], [], []
    for gi, g in enumerate(groups):
        imgs.extend(g.images)
        gids.extend([gi] * len(g))
        phis.extend(g.phis)
    gids = np.asarray(gids)
    return np.stack(imgs), gids, comparability_labels(gids, phis)
