"""Head-wise PCA: condense each attention head's per-pixel features to 3 scores."""

from dataclasses import dataclass

import numpy as np

from .bundle_io import AttentionBundle
from .errors import DimensionMismatch, NonFiniteInput

N_COMPONENTS = 3

# Eigenvalues at or below this fraction of the leading one count as rank
# deficiency; their components are zeroed instead of keeping noise vectors.
_RANK_RTOL = 1e-10


@dataclass
class PcaModel:
    mean: np.ndarray                # (D,)
    components: np.ndarray          # (3, D) rows, orthonormal or zero
    explained_variance: np.ndarray  # (3,) non-increasing


@dataclass
class PcMap:
    resolution: int
    values: np.ndarray              # (r, r, 3) per-pixel component scores
    head_id: str
    layer_name: str


def pca_fit(X) -> PcaModel:
    """Fit the top-3 principal directions of the rows of X.

    Deterministic: covariance eigendecomposition, components ordered by
    eigenvalue, each sign-fixed so its largest-magnitude coordinate is
    non-negative. Directions beyond the numerical rank come back as zero
    vectors with zero variance (constant heads are common in practice).
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got ndim={X.ndim}")
    if not np.isfinite(X).all():
        raise NonFiniteInput("matrix contains nan/inf")
    n, d = X.shape

    mean = X.mean(axis=0)
    components = np.zeros((N_COMPONENTS, d))
    variances = np.zeros(N_COMPONENTS)
    if n > 1:
        Xc = X - mean
        cov = (Xc.T @ Xc) / (n - 1)
        eigvals, eigvecs = np.linalg.eigh(cov)
        eigvals = np.maximum(eigvals[::-1], 0.0)
        eigvecs = eigvecs[:, ::-1]
        cutoff = eigvals[0] * _RANK_RTOL
        for i in range(min(N_COMPONENTS, d)):
            if eigvals[i] <= cutoff:
                break
            components[i] = _fix_sign(eigvecs[:, i])
            variances[i] = eigvals[i]
    return PcaModel(mean=mean, components=components, explained_variance=variances)


def _fix_sign(v):
    return -v if v[np.argmax(np.abs(v))] < 0 else v


def pca_transform(model: PcaModel, X) -> np.ndarray:
    """Project rows of X onto the model's components: (X - mean) @ components.T."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.mean.shape[0]:
        raise DimensionMismatch(
            f"matrix has {X.shape[-1] if X.ndim else 0} columns, model expects {model.mean.shape[0]}")
    return (X - model.mean) @ model.components.T


def condense_bundle(bundle: AttentionBundle) -> list:
    """One PcMap per (layer, head), manifest layer order then head index."""
    maps = []
    for layer in bundle.layers:
        r = layer.resolution
        for h in range(layer.heads):
            X = layer.features[h]
            scores = pca_transform(pca_fit(X), X)
            maps.append(PcMap(
                resolution=r,
                values=scores.reshape(r, r, N_COMPONENTS),
                head_id=str(h),
                layer_name=layer.name,
            ))
    return maps
