"""Assemble the clustering feature matrix from per-head component maps."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, UnsupportedResolution

GRID = 64
N_PIXELS = GRID * GRID

_ALLOWED = (16, 32, 64)


@dataclass
class FeatureMatrix:
    values: np.ndarray   # (4096, F) float64
    grid: tuple = (GRID, GRID)

    @property
    def n_pixels(self):
        return self.values.shape[0]

    @property
    def n_features(self):
        return self.values.shape[1]


def upsample_bilinear(grid_map, target: int = GRID) -> np.ndarray:
    """Corner-aligned bilinear upsampling of an (r, r, c) map to (target, target, c).

    The engine grid (target 64) only ever receives 16/32/64 sources; other
    targets accept any r <= target so the formula stays checkable at small
    sizes.
    """
    grid_map = np.asarray(grid_map, dtype=np.float64)
    r = grid_map.shape[0]
    if target == GRID and r not in _ALLOWED:
        raise UnsupportedResolution(f"source resolution {r} not in {_ALLOWED}")
    if r > target:
        raise UnsupportedResolution(f"source {r} exceeds target {target}")
    if r == target:
        return grid_map.copy()
    # output index i samples source coordinate i*(r-1)/(target-1)
    u = np.arange(target) * (r - 1) / (target - 1)
    i0 = np.floor(u).astype(int)
    i1 = np.minimum(i0 + 1, r - 1)
    f = u - i0
    rows = grid_map[i0] * (1 - f)[:, None, None] + grid_map[i1] * f[:, None, None]
    return rows[:, i0] * (1 - f)[None, :, None] + rows[:, i1] * f[None, :, None]


def assemble_features(pc_maps, w_pos: float = 1.0) -> FeatureMatrix:
    """Upsample every PcMap to 64x64, concatenate per pixel, z-score each
    column, then append x/63*w_pos and y/63*w_pos position columns.

    Pixel rows are row-major (y outer, x inner). Zero-variance columns
    become all-zero instead of dividing by ~0; position columns are left
    unnormalized so w_pos is the single spatial-prior knob.
    """
    pc_maps = list(pc_maps)
    if not pc_maps:
        raise EmptyInput("no component maps to assemble")

    columns = []
    for m in pc_maps:
        up = upsample_bilinear(m.values, GRID)
        columns.append(up.reshape(N_PIXELS, -1))
    feats = np.concatenate(columns, axis=1)

    mu = feats.mean(axis=0)
    sd = feats.std(axis=0)
    degenerate = sd < 1e-12
    sd_safe = np.where(degenerate, 1.0, sd)
    feats = (feats - mu) / sd_safe
    feats[:, degenerate] = 0.0

    xs = np.tile(np.arange(GRID), GRID) / (GRID - 1) * w_pos
    ys = np.repeat(np.arange(GRID), GRID) / (GRID - 1) * w_pos
    values = np.column_stack([feats, xs, ys])
    return FeatureMatrix(values=values)
