"""Deterministic stand-in backend.

Fabricates a blob scene per prompt: each detected class becomes an ellipse
whose pixels share per-head feature prototypes, cross-attention bumps, and
a flat fill color. Useful for pipeline development, conformance testing,
and CI where no diffusion model can run. Layer shapes follow the real
up-path pattern (16/32/64 with shrinking head counts, 64-dim features).
"""

from dataclasses import dataclass

import numpy as np

LATENT = 64

LAYER_SPECS = (("up_16", 16, 4), ("up_32", 32, 3), ("up_64", 64, 2))
FEATURE_DIM = 64


@dataclass
class BackendResult:
    image: np.ndarray        # (H, W, 3) uint8
    layers: list             # [(name, resolution, (heads, r*r, D) float32), ...]
    cross_maps: np.ndarray   # (n_tokens, 64, 64) float32, row 0 = SoT


def _rng_for(seed, index):
    return np.random.default_rng([seed & 0xFFFFFFFF, index])


def _blob_mask(rng, grid):
    cy, cx = rng.uniform(0.25, 0.75, size=2) * grid
    ry, rx = rng.uniform(0.12, 0.3, size=2) * grid
    ys, xs = np.mgrid[0:grid, 0:grid]
    return ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0


def _region_map(rng, class_ids):
    """64x64 int map: 0 background, i+1 the i-th class blob (later wins)."""
    regions = np.zeros((LATENT, LATENT), dtype=np.int64)
    for i, _ in enumerate(class_ids):
        regions[_blob_mask(rng, LATENT)] = i + 1
    return regions


class SyntheticBackend:
    name = "synthetic"

    def __init__(self, cfg):
        self.cfg = cfg

    def generate(self, prompt: str, index: int, class_ids) -> BackendResult:
        rng = _rng_for(self.cfg.seed, index)
        regions = _region_map(rng, class_ids)
        n_regions = len(class_ids) + 1

        layers = []
        for name, res, heads in LAYER_SPECS:
            stride = LATENT // res
            region_r = regions[::stride, ::stride].reshape(-1)
            feats = np.empty((heads, res * res, FEATURE_DIM), dtype=np.float32)
            for h in range(heads):
                prototypes = rng.standard_normal((n_regions, FEATURE_DIM))
                noise = 0.05 * rng.standard_normal((res * res, FEATURE_DIM))
                feats[h] = prototypes[region_r] + noise
            layers.append((name, res, feats))

        cross = np.empty((n_regions, LATENT, LATENT), dtype=np.float32)
        jitter = 0.02 * rng.random((n_regions, LATENT, LATENT))
        for i in range(1, n_regions):
            cross[i] = (regions == i).astype(np.float32)
        cross[0] = (regions == 0).astype(np.float32)  # SoT tracks the background
        cross = np.clip(cross + jitter, 0.0, 1.0).astype(np.float32)

        image = self._render(rng, regions, class_ids)
        return BackendResult(image=image, layers=layers, cross_maps=cross)

    def _render(self, rng, regions, class_ids):
        px = self.cfg.image_size
        colors = np.vstack([[36, 40, 44], rng.integers(70, 230, size=(len(class_ids), 3))])
        scale = px // LATENT
        big = np.kron(regions, np.ones((scale, scale), dtype=np.int64))
        image = colors[big].astype(np.float64)
        image += rng.normal(0, 2.0, size=image.shape)
        return np.clip(image, 0, 255).astype(np.uint8)
