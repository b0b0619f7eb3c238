"""Matrix-based Renyi entropy, joint entropy and mutual information.

All quantities are in bits. Entropies are computed from the spectrum of a
trace-one PSD matrix; gradients are taken with respect to the matrix entries
and, for the mutual information, chained down to the embedding rows that
produced the Gaussian Gram matrix.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import InvalidInputError, InvalidOrderError, NumericalError
from .gram_kernel import NormalizedGram, as_matrix, check_samples, gaussian_gram

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
EIG_CLAMP = 1e-12
TRACE_FLOOR = 1e-300
DEFAULT_ORDER = 1.01


def check_order(alpha: float) -> float:
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidOrderError(f"entropy order must be positive and finite, got {alpha}")
    if alpha == 1.0:
        raise InvalidOrderError("entropy order 1 is the Shannon limit; use shannon_entropy")
    return alpha


def _eigh(A: np.ndarray):
    try:
        lam, U = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed ({exc}); {_condition_report(A)}") from exc
    return lam, U


def _condition_report(A: np.ndarray) -> str:
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        cond = float("nan")
    finite = bool(np.all(np.isfinite(A)))
    return f"shape={A.shape}, finite={finite}, cond={cond:.3e}"


def _clean_spectrum(lam: np.ndarray) -> np.ndarray:
    lam = np.where(lam < EIG_CLAMP, 0.0, lam)
    total = lam.sum()
    if not total > 0:
        raise NumericalError("spectrum has no positive eigenvalues after clamping")
    return lam / total


def eigenvalues_psd(A) -> np.ndarray:
    """Eigenvalues in descending order, clamped at 1e-12 and renormalized to sum 1."""
    if isinstance(A, NormalizedGram) and A.eigenvalues is not None:
        return A.eigenvalues
    M = as_matrix(A)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    try:
        lam = np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed ({exc}); {_condition_report(M)}") from exc
    return _clean_spectrum(lam)[::-1]


def _renyi_from_spectrum(lam: np.ndarray, alpha: float) -> float:
    lam = lam[lam > 0]
    # log(sum lam^a) = log1p(sum lam * expm1((a-1) log lam)), accurate for a near 1;
    # once sum lam^a drops well below 1 the log1p argument cancels, so sum directly
    s = float(np.sum(lam * np.expm1((alpha - 1.0) * np.log(lam))))
    if s > -0.5:
        return math.log1p(s) / ((1.0 - alpha) * LN2)
    return math.log(float(np.sum(lam ** alpha))) / ((1.0 - alpha) * LN2)


def entropy_alpha(A, alpha: float = DEFAULT_ORDER) -> float:
    alpha = check_order(alpha)
    return _renyi_from_spectrum(eigenvalues_psd(A), alpha)


def shannon_entropy(A) -> float:
    lam = eigenvalues_psd(A)
    lam = lam[lam > 0]
    return float(-np.sum(lam * np.log2(lam)))


def joint_matrix(A, B) -> np.ndarray:
    """Trace-normalized Hadamard product of two Gram matrices."""
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise InvalidInputError(f"joint entropy needs equal shapes, got {A.shape} and {B.shape}")
    P = A * B
    t = float(np.trace(P))
    if not t > TRACE_FLOOR:
        raise NumericalError(f"trace of Hadamard product underflowed ({t})")
    return P / t


def joint_entropy(A, B, alpha: float = DEFAULT_ORDER) -> float:
    return entropy_alpha(joint_matrix(A, B), alpha)


def mutual_information(A, B, alpha: float = DEFAULT_ORDER) -> float:
    alpha = check_order(alpha)
    return entropy_alpha(A, alpha) + entropy_alpha(B, alpha) - joint_entropy(A, B, alpha)


def _entropy_with_grad(M: np.ndarray, alpha: float) -> tuple[float, np.ndarray]:
    """Entropy of ``M`` and its gradient w.r.t. the entries, from one eigh."""
    lam_raw, U = _eigh(M)
    lam = _clean_spectrum(lam_raw)
    H = _renyi_from_spectrum(lam, alpha)
    if alpha < 1 and np.any(lam < EIG_CLAMP):
        logger.debug("order %.3g < 1 with %d null eigenvalues: gradient is ill-conditioned",
                     alpha, int(np.sum(lam < EIG_CLAMP)))
    # modes zeroed by the clamp carry no weight in the value, so none in the gradient
    pos = lam > 0
    lam_pow = np.zeros_like(lam)
    lam_pow[pos] = np.maximum(lam[pos], EIG_CLAMP) ** (alpha - 1.0)
    tr_pow = float(np.sum(lam[pos] ** alpha))
    coef = alpha / ((1.0 - alpha) * LN2 * tr_pow)
    grad = (U * (coef * lam_pow)) @ U.T
    return H, 0.5 * (grad + grad.T)


def grad_entropy_wrt_A(A, alpha: float = DEFAULT_ORDER) -> np.ndarray:
    """Gradient of the entropy: ``alpha / ((1 - alpha) ln 2) * A^(alpha-1) / tr(A^alpha)``."""
    alpha = check_order(alpha)
    return _entropy_with_grad(as_matrix(A), alpha)[1]


def _joint_with_grads(A: np.ndarray, B: np.ndarray, alpha: float):
    """Joint entropy and its gradients w.r.t. both arguments."""
    if A.shape != B.shape:
        raise InvalidInputError(f"joint entropy needs equal shapes, got {A.shape} and {B.shape}")
    P = A * B
    t = float(np.trace(P))
    if not t > TRACE_FLOOR:
        raise NumericalError(f"trace of Hadamard product underflowed ({t})")
    J = P / t
    H, GJ = _entropy_with_grad(J, alpha)
    # chain through J = (A o B) / tr(A o B)
    c = float(np.sum(GJ * J))
    gA = (GJ * B - c * np.diag(np.diag(B))) / t
    gB = (GJ * A - c * np.diag(np.diag(A))) / t
    return H, gA, gB


def grad_joint_wrt_A(A, B, alpha: float = DEFAULT_ORDER) -> np.ndarray:
    alpha = check_order(alpha)
    return _joint_with_grads(as_matrix(A), as_matrix(B), alpha)[1]


def _gram_backward(Z: np.ndarray, G: np.ndarray, dG: np.ndarray, sigma: float) -> np.ndarray:
    """Pull a gradient on Gaussian Gram entries back to the rows of ``Z``.

    Uses dG_ij/dz_i = G_ij (z_j - z_i) / sigma^2 and symmetry of ``dG``.
    """
    W = (dG + dG.T) * G
    return (W @ Z - W.sum(axis=1)[:, None] * Z) / (sigma * sigma)


def mi_with_grads(X, Z, sigma_x: float, sigma_z: float, alpha: float = DEFAULT_ORDER,
                  need_x: bool = True):
    """MI between Gaussian Grams of two sample matrices plus gradients w.r.t. both.

    The Gram diagonals are identically one, so the trace normalization is the
    constant 1/N and only off-diagonal entries carry gradient.

    Returns:
        (mi, grad_x, grad_z); ``grad_x`` is None when ``need_x`` is False.
    """
    alpha = check_order(alpha)
    Gx = gaussian_gram(X, sigma_x)
    Gz = gaussian_gram(Z, sigma_z)
    n = Gx.shape[0]
    if Gz.shape[0] != n:
        raise InvalidInputError(f"sample counts differ: {n} vs {Gz.shape[0]}")
    Ax, Az = Gx / n, Gz / n
    Hx, gHx = _entropy_with_grad(Ax, alpha)
    Hz, gHz = _entropy_with_grad(Az, alpha)
    Hj, gJx, gJz = _joint_with_grads(Ax, Az, alpha)
    mi = Hx + Hz - Hj
    grad_z = _gram_backward(np.asarray(Z, float), Gz, (gHz - gJz) / n, sigma_z)
    grad_x = None
    if need_x:
        grad_x = _gram_backward(np.asarray(X, float), Gx, (gHx - gJx) / n, sigma_x)
    return mi, grad_x, grad_z


def mi_with_grad_fixed(A_fixed, Z, sigma: float, alpha: float = DEFAULT_ORDER):
    """MI between a fixed normalized Gram and the Gaussian Gram of ``Z``, with dI/dZ."""
    alpha = check_order(alpha)
    Ax = as_matrix(A_fixed)
    Z = check_samples(Z, "Z")
    Gz = gaussian_gram(Z, sigma)
    n = Gz.shape[0]
    if Ax.shape != Gz.shape:
        raise InvalidInputError(f"Gram shape {Ax.shape} does not match {n} embeddings")
    Az = Gz / n
    Hx = entropy_alpha(Ax, alpha)
    Hz, gHz = _entropy_with_grad(Az, alpha)
    Hj, _, gJz = _joint_with_grads(Ax, Az, alpha)
    grad = _gram_backward(Z, Gz, (gHz - gJz) / n, sigma)
    return Hx + Hz - Hj, grad


def grad_mi_wrt_embeddings(X_gram, Z, sigma: float, alpha: float = DEFAULT_ORDER) -> np.ndarray:
    """dI(X; Z)/dZ with the bandwidth held constant."""
    return mi_with_grad_fixed(X_gram, Z, sigma, alpha)[1]
