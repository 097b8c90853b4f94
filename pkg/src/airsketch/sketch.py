"""Device-side streaming sketches.

A device never factorizes anything: each slot it regenerates a Gaussian
dimension-reduction map from its seed lineage and multiplies.
"""

from dataclasses import dataclass

import numpy as np

from . import rng


@dataclass(frozen=True)
class DrmBlock:
    slot: int
    device: int
    entries: np.ndarray
    seed_lineage: tuple


@dataclass(frozen=True)
class LocalSketch:
    slot: int
    device: int
    entries: np.ndarray


def gen_drm(root_seed, t, k, rows, cols):
    """I.i.d. N(0, 1) block ``Omega_{t,k}`` of shape ``(rows, cols)``."""
    if rows < 1 or cols < 1:
        raise ValueError(f"DRM shape must be positive, got ({rows}, {cols})")
    entries = rng.substream(root_seed, rng.DRM, t, k).standard_normal((rows, cols))
    return DrmBlock(t, k, entries, (int(root_seed), int(t), int(k)))


def local_sketch(X_k, drm):
    X_k = np.asarray(X_k)
    if X_k.shape[1] != drm.entries.shape[0]:
        raise ValueError(
            f"local data has {X_k.shape[1]} columns but the DRM has {drm.entries.shape[0]} rows")
    return LocalSketch(drm.slot, drm.device, X_k @ drm.entries)


def stacked_drm(root_seed, t, widths, M):
    """Global map ``F_t``: the per-device blocks stacked in device order."""
    return np.vstack([gen_drm(root_seed, t, k, w, M).entries for k, w in enumerate(widths)])


def slot_sketches(root_seed, t, blocks, M):
    return [local_sketch(X_k, gen_drm(root_seed, t, k, X_k.shape[1], M))
            for k, X_k in enumerate(blocks)]
