"""Seeded K-Means and 4-connected cluster splitting.

Reproducibility contract: identical (X, k, seed) must give bitwise-identical
labels on any machine and any worker count. Randomness therefore comes from
an explicit 64-bit LCG rather than an ecosystem PRNG, and all per-point work
is done in fixed-size chunks whose partial results are combined in chunk
order, so the arithmetic never depends on how many threads ran.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .errors import KTooLarge, NonFiniteInput

_CHUNK = 4096

_FOUR_CONNECTED = np.array([[0, 1, 0],
                            [1, 1, 1],
                            [0, 1, 0]])


class Lcg64:
    """64-bit linear congruential generator (Knuth's MMIX constants).

    state' = state * 6364136223846793005 + 1442695040888963407  (mod 2^64)
    Floats take the top 53 bits, giving uniforms in [0, 1).
    """

    _MULT = 6364136223846793005
    _INC = 1442695040888963407
    _MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self._MASK

    def next_u64(self) -> int:
        self.state = (self.state * self._MULT + self._INC) & self._MASK
        return self.state

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def next_index(self, n: int) -> int:
        return min(int(self.next_float() * n), n - 1)


@dataclass
class ClusterLabeling:
    grid: tuple            # (h, w)
    labels: np.ndarray     # (h*w,) int64, contiguous 0..n_clusters-1
    k_requested: int
    n_clusters: int
    inertia: float         # sum of squared distances, pre-split


def kmeanspp_init(X, k: int, seed: int) -> np.ndarray:
    """k-means++ seeding: first centroid uniform, the rest proportional to
    squared distance from the nearest chosen one."""
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} points")
    rng = Lcg64(seed)

    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.next_index(n)
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            # cumulative inverse sampling; zero-weight (already chosen)
            # points can never be hit with side='right'
            r = rng.next_float() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = rng.next_index(n)
        chosen[i] = idx
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _assign_chunk(Xc, centroids, cent_sq, k):
    """Labels, squared distances, and per-cluster partial sums for one chunk."""
    d = Xc @ centroids.T
    d *= -2.0
    d += (Xc * Xc).sum(axis=1)[:, None]
    d += cent_sq[None, :]
    labels = np.argmin(d, axis=1)   # ties: lowest centroid index
    dmin = np.maximum(d[np.arange(len(Xc)), labels], 0.0)
    sums = np.zeros((k, Xc.shape[1]))
    counts = np.bincount(labels, minlength=k)
    for c in np.nonzero(counts)[0]:
        sums[c] = Xc[labels == c].sum(axis=0)
    return labels, dmin, sums, counts


def _assign(X, centroids, n_threads):
    """Full assignment pass. Chunk size is fixed, results are merged in
    chunk order: bitwise identical for any n_threads."""
    n, _ = X.shape
    k = len(centroids)
    cent_sq = (centroids * centroids).sum(axis=1)
    chunks = [slice(s, min(s + _CHUNK, n)) for s in range(0, n, _CHUNK)]

    def work(sl):
        return _assign_chunk(X[sl], centroids, cent_sq, k)

    if n_threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(work, chunks))
    else:
        parts = [work(sl) for sl in chunks]

    labels = np.concatenate([p[0] for p in parts])
    dmin = np.concatenate([p[1] for p in parts])
    sums = np.zeros((k, X.shape[1]))
    counts = np.zeros(k, dtype=np.int64)
    for _, _, s, c in parts:
        sums += s
        counts += c
    return labels, dmin, sums, counts


def kmeans_fit(X, k: int, seed: int, max_iter: int = 300, tol: float = 1e-6,
               n_threads: int = 1, grid=None, restarts: int = 1):
    """Lloyd iterations from a k-means++ start.

    Nearest-centroid ties break toward the lowest centroid index; a cluster
    that empties is re-seeded with the point farthest from its assigned
    centroid (silently dropping it would change downstream vote counts).
    With restarts > 1 the run with the lowest inertia wins (earlier run on
    ties); restart r derives its seed as seed xor r*0x9E3779B97F4A7C15.
    Returns (ClusterLabeling, centroids); labels are renumbered by first
    occurrence in pixel order.
    """
    X = np.asarray(X, dtype=np.float64)
    if not np.isfinite(X).all():
        raise NonFiniteInput("points contain nan/inf")
    n = X.shape[0]
    if k > n:
        raise KTooLarge(f"k={k} exceeds {n} points")

    best = None
    for run in range(max(restarts, 1)):
        run_seed = (seed ^ (run * 0x9E3779B97F4A7C15)) & 0xFFFFFFFFFFFFFFFF
        result = _kmeans_single(X, k, run_seed, max_iter, tol, n_threads, grid)
        if best is None or result[0].inertia < best[0].inertia:
            best = result
    return best


def _kmeans_single(X, k, seed, max_iter, tol, n_threads, grid):
    n = X.shape[0]
    centroids = kmeanspp_init(X, k, seed)
    inertia_history = []
    for _ in range(max_iter):
        labels, dmin, sums, counts = _assign(X, centroids, n_threads)
        inertia = float(dmin.sum())
        if inertia_history:
            assert inertia <= inertia_history[-1] * (1 + 1e-9) + 1e-12
        inertia_history.append(inertia)

        new_centroids = centroids.copy()
        nonempty = counts > 0
        new_centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not nonempty.all():
            dmin_pool = dmin.copy()
            for c in np.nonzero(~nonempty)[0]:
                far = int(np.argmax(dmin_pool))
                new_centroids[c] = X[far]
                dmin_pool[far] = -1.0
        shift = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if shift < tol:
            break

    labels, _, _, _ = _assign(X, centroids, n_threads)
    # reported inertia uses the direct form: the expanded form used for
    # assignment speed leaves ~1e-16 residue where the true value is 0
    inertia = float(((X - centroids[labels]) ** 2).sum())

    labels, n_clusters, order = _relabel_first_occurrence(labels)
    centroids = centroids[order]
    if grid is None:
        grid = (1, n)
    labeling = ClusterLabeling(grid=tuple(grid), labels=labels, k_requested=k,
                               n_clusters=n_clusters, inertia=inertia)
    labeling.inertia_history = inertia_history
    return labeling, centroids


def _relabel_first_occurrence(labels):
    """Renumber labels contiguously by first appearance in scan order."""
    uniq, first = np.unique(labels, return_index=True)
    order = uniq[np.argsort(first)]
    remap = np.empty(int(labels.max()) + 1, dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[labels], len(order), order


def split_components(labeling: ClusterLabeling) -> ClusterLabeling:
    """Split every label into its 4-connected components.

    Pixels touching only diagonally end up in different components. The
    refined labels are renumbered by first occurrence in scan order; the
    partition is only ever refined, never coarsened.
    """
    h, w = labeling.grid
    lab = labeling.labels.reshape(h, w)
    provisional = np.empty((h, w), dtype=np.int64)
    offset = 0
    for value in np.unique(lab):
        mask = lab == value
        comp, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
        provisional[mask] = comp[mask] + (offset - 1)
        offset += n
    flat, n_clusters, _ = _relabel_first_occurrence(provisional.ravel())
    return replace(labeling, labels=flat, n_clusters=n_clusters)
