"""Assign VOC classes to sub-clusters via thresholded cross-attention IoU,
then aggregate the (K, threshold) votes into a 64x64 mask."""

from dataclasses import dataclass

import numpy as np

from .bundle_io import AttentionBundle
from .catalog import IGNORE_ID
from .cluster import ClusterLabeling
from .errors import NonFiniteInput, ShapeMismatch
from .features import upsample_bilinear

BACKGROUND = 0
DEFAULT_BACKGROUND_BOOST = 1.2

N_CLASSES = 21


@dataclass
class CrossAttentionSet:
    """Per-class 64x64 attention maps; key 0 is background (from the SoT token)."""
    maps: dict
    normalized: bool = False

    def class_ids(self):
        return sorted(self.maps)


@dataclass
class VoteStack:
    votes: np.ndarray  # (V, 64, 64) int labels
    k_set: tuple = ()
    t_set: tuple = ()


def normalize_attention(attention_map) -> np.ndarray:
    """Min-max rescale one map to [0, 1]; a constant map becomes all zeros."""
    m = np.asarray(attention_map, dtype=np.float64)
    if not np.isfinite(m).all():
        raise NonFiniteInput("attention map contains nan/inf")
    lo, hi = m.min(), m.max()
    if hi == lo:
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def build_attention_set(bundle: AttentionBundle, mode: str = "per_map") -> CrossAttentionSet:
    """Extract per-class 64x64 maps from a bundle's cross-attention tensor.

    The SoT token becomes the background map. mode="global" rescales all
    maps against the shared min/max instead of per map (ablation knob).
    """
    maps = {}
    for i, (_, cid) in enumerate(bundle.cross_attention.tokens):
        m = bundle.cross_attention.maps[i].astype(np.float64)
        if bundle.cross_attention.resolution != 64:
            m = upsample_bilinear(m[:, :, None], 64)[:, :, 0]
        if cid == "sot":
            maps[BACKGROUND] = m
        elif isinstance(cid, int) and cid >= 1:
            maps[cid] = m
    if mode == "global":
        lo = min(m.min() for m in maps.values())
        hi = max(m.max() for m in maps.values())
        span = (hi - lo) or 1.0
        maps = {c: (m - lo) / span for c, m in maps.items()}
    else:
        maps = {c: normalize_attention(m) for c, m in maps.items()}
    return CrossAttentionSet(maps=maps, normalized=True)


def binarize(attention_map, t: float, is_background: bool,
             boost: float = DEFAULT_BACKGROUND_BOOST) -> np.ndarray:
    """Threshold a normalized map at t; the background threshold is raised
    to min(boost*t, 1.0) to rein in the SoT map's reach. Comparison is >=
    so maps saturating at 1.0 stay usable after the clamp."""
    t_eff = min(boost * t, 1.0) if is_background else t
    return np.asarray(attention_map) >= t_eff


def iou_binary(a, b) -> float:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum()) / float(union)


def classify_clusters(sub_labeling: ClusterLabeling, attn: CrossAttentionSet,
                      t: float, boost: float = DEFAULT_BACKGROUND_BOOST) -> np.ndarray:
    """Label every sub-cluster with the class whose binarized map overlaps
    it best (highest IoU; ties to the lowest class id; all-zero -> background)."""
    h, w = sub_labeling.grid
    labels = sub_labeling.labels
    n = sub_labeling.n_clusters
    cluster_sizes = np.bincount(labels, minlength=n)

    best_iou = np.zeros(n)
    best_class = np.full(n, BACKGROUND, dtype=np.int64)
    for cid in attn.class_ids():
        binary = binarize(attn.maps[cid], t, cid == BACKGROUND, boost).ravel()
        inter = np.bincount(labels[binary], minlength=n).astype(np.float64)
        union = cluster_sizes + binary.sum() - inter
        with np.errstate(invalid="ignore"):
            iou = np.where(union > 0, inter / union, 0.0)
        wins = iou > best_iou  # strict: earlier (lower) class id keeps ties
        best_iou[wins] = iou[wins]
        best_class[wins] = cid
    return best_class[labels].reshape(h, w)


def aggregate_votes(stack: VoteStack) -> np.ndarray:
    """Per-pixel mode over the vote layers; a label wins only with a strict
    majority (> V/2), otherwise the pixel is marked uncertain (255)."""
    votes = np.asarray(stack.votes)
    v = votes.shape[0]
    counts = np.stack([(votes == c).sum(axis=0) for c in range(N_CLASSES)])
    top_count = counts.max(axis=0)
    top_class = counts.argmax(axis=0)
    out = np.where(2 * top_count > v, top_class, IGNORE_ID)
    return out.astype(np.uint8)
