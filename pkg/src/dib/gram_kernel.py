"""Gaussian kernel Gram matrices, median-heuristic bandwidths and trace normalization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateDataError, InvalidInputError

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class NormalizedGram:
    """Symmetric PSD matrix with unit trace.

    ``eigenvalues`` is an optional cache, filled only at construction time.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray | None = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def as_matrix(A) -> np.ndarray:
    if isinstance(A, NormalizedGram):
        return A.matrix
    return np.asarray(A, dtype=float)


def check_samples(M, name: str = "samples") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D sample matrix, got shape {M.shape}")
    if M.shape[0] < 2:
        raise InvalidInputError(f"{name} needs at least 2 rows, got {M.shape[0]}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return M


def pairwise_sq_dists(M) -> np.ndarray:
    """Squared Euclidean distances between all rows of ``M``.

    Differences are formed explicitly (not via the ``|x|^2 + |y|^2 - 2xy``
    expansion) so the result is exact under translation of the data.
    """
    M = check_samples(M)
    return squareform(pdist(M, "sqeuclidean"))


def median_heuristic_sigma(dists, multiplier: float = 1.0) -> float:
    """Bandwidth equal to ``multiplier`` times the median pairwise distance.

    Args:
        dists: (N, N) matrix of squared distances.
        multiplier: positive scale applied to the median.

    Returns:
        sigma as a Python float.
    """
    if not (np.isfinite(multiplier) and multiplier > 0):
        raise InvalidInputError(f"bandwidth multiplier must be positive, got {multiplier}")
    dists = np.asarray(dists, dtype=float)
    iu = np.triu_indices(dists.shape[0], k=1)
    off = dists[iu]
    if off.size == 0 or not np.any(off > 0):
        raise DegenerateDataError("all points are identical; median heuristic gives sigma = 0")
    sigma = multiplier * float(np.median(np.sqrt(off)))
    if not sigma > 0:
        raise DegenerateDataError("median pairwise distance is zero; bandwidth undefined")
    return sigma


def gaussian_gram(M, sigma: float) -> np.ndarray:
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidInputError(f"sigma must be positive and finite, got {sigma}")
    return np.exp(-pairwise_sq_dists(M) / (2.0 * sigma * sigma))


def normalize_gram(G) -> NormalizedGram:
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InvalidInputError(f"Gram matrix must be square, got shape {G.shape}")
    if not np.all(np.isfinite(G)):
        raise InvalidInputError("Gram matrix contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(G))))
    if np.max(np.abs(G - G.T)) > SYMMETRY_TOL * scale:
        raise InvalidInputError("Gram matrix is not symmetric")
    tr = float(np.trace(G))
    if not tr > 0:
        raise InvalidInputError(f"Gram matrix trace must be positive, got {tr}")
    return NormalizedGram(G / tr)


def resolve_sigma(M, sigma: float | None = None, multiplier: float = 1.0) -> float:
    """Fixed ``sigma`` when given, otherwise the median heuristic on ``M``."""
    if sigma is not None:
        return float(sigma)
    return median_heuristic_sigma(pairwise_sq_dists(M), multiplier)


def gram_of(M, sigma: float | None = None, multiplier: float = 1.0) -> tuple[NormalizedGram, float]:
    """Normalized Gaussian Gram of ``M`` together with the bandwidth used."""
    M = check_samples(M)
    d = pairwise_sq_dists(M)
    s = float(sigma) if sigma is not None else median_heuristic_sigma(d, multiplier)
    if not (np.isfinite(s) and s > 0):
        raise InvalidInputError(f"sigma must be positive and finite, got {s}")
    return normalize_gram(np.exp(-d / (2.0 * s * s))), s
