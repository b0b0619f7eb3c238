"""Finite-difference audit of every analytical gradient in the package."""

from __future__ import annotations

import numpy as np

from . import losses
from .gram_kernel import gaussian_gram, gram_of, normalize_gram, resolve_sigma
from .neural import softmax
from .renyi import (entropy_alpha, grad_entropy_wrt_A, grad_joint_wrt_A, grad_mi_wrt_embeddings,
                    joint_entropy, mutual_information)

STEP = 1e-5
MAGNITUDE_FLOOR = 1e-8
# entries far below the gradient's own scale are judged against that scale:
# central differences at STEP carry ~1e-13 / STEP of round-off regardless of entry size
SCALE_FLOOR = 1e-3


def max_relative_error(analytic, numeric, floor: float = MAGNITUDE_FLOOR,
                       scale_floor: float = SCALE_FLOOR) -> float:
    """Largest ``|a - f| / max(|a|, |f|, scale_floor * max|a|, floor)`` over all entries."""
    a, f = np.ravel(analytic), np.ravel(numeric)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(f)),
                       max(floor, scale_floor * float(np.max(np.abs(a)))))
    return float(np.max(np.abs(a - f) / denom))


def central_difference(f, x: np.ndarray, step: float = STEP) -> np.ndarray:
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += step
        xm[idx] -= step
        grad[idx] = (f(xp) - f(xm)) / (2 * step)
    return grad


def symmetric_difference(f, A: np.ndarray, step: float = STEP, trace_free: bool = False):
    """Directional derivatives of ``f`` along symmetric unit perturbations.

    Returns (numeric, pairing) where ``pairing(G)`` maps an analytical gradient
    to the same directions. With ``trace_free`` the diagonal directions are
    ``E_ii - E_nn`` so the trace is preserved.
    """
    n = A.shape[0]
    dirs = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros_like(A)
            E[i, j] = E[j, i] = 1.0
            if i == j and trace_free:
                if i == n - 1:
                    continue
                E[n - 1, n - 1] = -1.0
            dirs.append(E)
    numeric = np.array([(f(A + step * E) - f(A - step * E)) / (2 * step) for E in dirs])

    def pairing(G):
        return np.array([np.sum(G * E) for E in dirs])

    return numeric, pairing


def random_trace_one(rng, n: int) -> np.ndarray:
    """Wishart draw with 2n degrees of freedom, trace-normalized.

    Extra degrees of freedom keep the smallest eigenvalue well above STEP so
    that central differences stay in their truncation-accurate regime.
    """
    R = rng.standard_normal((n, 2 * n))
    M = R @ R.T
    return M / np.trace(M)


def check_entropy(rng, n, alpha):
    A = random_trace_one(rng, n)
    numeric, pair = symmetric_difference(lambda M: entropy_alpha(M, alpha), A, trace_free=True)
    return max_relative_error(pair(grad_entropy_wrt_A(A, alpha)), numeric)


def check_joint(rng, n, alpha):
    A, B = random_trace_one(rng, n), random_trace_one(rng, n)
    numeric, pair = symmetric_difference(lambda M: joint_entropy(M, B, alpha), A)
    return max_relative_error(pair(grad_joint_wrt_A(A, B, alpha)), numeric)


def check_mi_embeddings(rng, n, alpha):
    X, Z = rng.standard_normal((n, 3)), rng.standard_normal((n, 2))
    Ax, _ = gram_of(X)
    sigma = resolve_sigma(Z)
    f = lambda Zp: mutual_information(Ax, normalize_gram(gaussian_gram(Zp, sigma)), alpha)  # noqa: E731
    return max_relative_error(grad_mi_wrt_embeddings(Ax, Z, sigma, alpha), central_difference(f, Z))


def check_joint_consistency(rng, n, alpha):
    H = rng.standard_normal((n, 4))
    S = softmax(2.0 * rng.standard_normal((n, 5)))
    sig = (resolve_sigma(H), resolve_sigma(S))
    _, gH, gS = losses.joint_consistency(H, S, alpha, sigmas=sig)
    fH = lambda Hp: losses.joint_consistency(Hp, S, alpha, sigmas=sig)[0]  # noqa: E731
    fS = lambda Sp: losses.joint_consistency(H, Sp, alpha, sigmas=sig)[0]  # noqa: E731
    return max(max_relative_error(gH, central_difference(fH, H)),
               max_relative_error(gS, central_difference(fS, S)))


def check_compression(rng, n, alpha):
    X, Z = rng.standard_normal((n, 5)), rng.standard_normal((n, 3))
    Ax, _ = gram_of(X)
    policy = losses.SigmaPolicy(fixed=resolve_sigma(Z))
    _, g = losses.compression(Ax, Z, alpha, policy)
    f = lambda Zp: losses.compression(Ax, Zp, alpha, policy)[0]  # noqa: E731
    return max_relative_error(g, central_difference(f, Z))


def _per_view(fn, views, grads):
    errs = []
    for v in range(len(views)):
        def f(x, v=v):
            vs = list(views)
            vs[v] = x
            return fn(vs)
        errs.append(max_relative_error(grads[v], central_difference(f, views[v])))
    return max(errs)


def check_feature(rng, n, denominator="standard"):
    H = [rng.standard_normal((n, 4)) for _ in range(2)]
    fn = lambda vs: losses.feature_consistency(vs, 0.5, denominator)[0]  # noqa: E731
    return _per_view(fn, H, losses.feature_consistency(H, 0.5, denominator)[1])


def check_cluster(rng, n, denominator="standard"):
    S = [softmax(2.0 * rng.standard_normal((n, 3))) for _ in range(2)]
    fn = lambda vs: losses.cluster_consistency(vs, 1.0, denominator, 0.5, validate=False)[0]  # noqa: E731
    return _per_view(fn, S, losses.cluster_consistency(S, 1.0, denominator, 0.5)[1])


MI_CASES = {
    "entropy_A": check_entropy,
    "joint_A": check_joint,
    "mi_Z": check_mi_embeddings,
    "loss_joint": check_joint_consistency,
    "loss_comp": check_compression,
}
CONTRASTIVE_CASES = {
    "loss_fea": check_feature,
    "loss_clu": check_cluster,
}


def run(alphas=(0.5, 1.01, 2.0, 5.0), sizes=(5, 10), trials: int = 50, seed: int = 0,
        tolerance: float = 1e-4) -> dict:
    """Run every case and return a JSON-ready report."""
    cases = []
    for n in sizes:
        for trial in range(trials):
            for name, fn in CONTRASTIVE_CASES.items():
                rng = np.random.default_rng([seed, n, trial, len(cases)])
                cases.append({"case": name, "alpha": None, "n": n, "trial": trial,
                              "max_rel_err": fn(rng, n)})
            for alpha in alphas:
                for name, fn in MI_CASES.items():
                    rng = np.random.default_rng([seed, n, trial, len(cases)])
                    cases.append({"case": name, "alpha": alpha, "n": n, "trial": trial,
                                  "max_rel_err": fn(rng, n, alpha)})
    worst = max(cases, key=lambda c: c["max_rel_err"]) if cases else None
    summary = {}
    for c in cases:
        summary[c["case"]] = max(summary.get(c["case"], 0.0), c["max_rel_err"])
    return {
        "tolerance": tolerance,
        "step": STEP,
        "passed": all(c["max_rel_err"] < tolerance for c in cases),
        "worst": worst,
        "max_rel_err_by_case": summary,
        "cases": cases,
    }
