"""Lift the 64x64 mask to image resolution with RGB+position K-Means."""

from dataclasses import dataclass

import numpy as np

from .catalog import IGNORE_ID
from .classify import N_CLASSES
from .cluster import kmeans_fit, split_components


@dataclass
class RefineConfig:
    k: int = 20
    majority: float = 2.0 / 3.0   # required share, exclusive (> rule)
    w_pos_rgb: float = 1.0
    seed: int = 0
    min_cluster_px: int = 0       # 0 disables the size floor

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k={self.k} must be >= 1")
        if not 0.5 < self.majority <= 1.0:
            raise ValueError(f"majority={self.majority} outside (0.5, 1]")


def upsample_mask_nearest(mask, target) -> np.ndarray:
    """Nearest-neighbor expansion of a label mask to (width, height) target.

    Labels are categorical, so no interpolation: the label set can only
    shrink, never grow.
    """
    mask = np.asarray(mask)
    w, h = target
    sh, sw = mask.shape
    ys = (np.arange(h) * sh) // h
    xs = (np.arange(w) * sw) // w
    return mask[np.ix_(ys, xs)]


def refine_mask(image, low_mask, cfg: RefineConfig) -> np.ndarray:
    """Refine a 64x64 mask against the RGB image it belongs to.

    Clusters the image on (r, g, b, x, y) with a fixed large K, splits
    disconnected pieces, then gives each piece the upsampled-mask class
    that covers more than cfg.majority of it; pieces with no such dominant
    class (or below the size floor) become uncertain. Uncertain pixels of
    the low mask stay in the denominator: a cluster dominated by them must
    not launder into a class.
    """
    image = np.asarray(image)
    h, w = image.shape[:2]

    rgb = image.reshape(h * w, 3).astype(np.float64) / 255.0
    xs = np.tile(np.arange(w), h) / max(w - 1, 1) * cfg.w_pos_rgb
    ys = np.repeat(np.arange(h), w) / max(h - 1, 1) * cfg.w_pos_rgb
    X = np.column_stack([rgb, xs, ys])

    labeling, _ = kmeans_fit(X, cfg.k, cfg.seed, grid=(h, w))
    sub = split_components(labeling)

    up = upsample_mask_nearest(low_mask, (w, h)).ravel()
    hist_index = sub.labels * 256 + up
    hist = np.bincount(hist_index, minlength=sub.n_clusters * 256)
    hist = hist.reshape(sub.n_clusters, 256)
    sizes = hist.sum(axis=1)
    class_counts = hist[:, :N_CLASSES]
    top = class_counts.argmax(axis=1)
    top_count = class_counts[np.arange(sub.n_clusters), top]
    # strict share rule; a fully pure cluster always qualifies, even at
    # majority exactly 1.0 where the strict comparison alone would drop it
    keep = (top_count > cfg.majority * sizes) | (top_count == sizes)
    if cfg.min_cluster_px:
        keep &= sizes >= cfg.min_cluster_px
    assigned = np.where(keep, top, IGNORE_ID)
    out = assigned[sub.labels].astype(np.uint8)
    return out.reshape(h, w)
