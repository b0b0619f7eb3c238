"""Loss terms of the multi-view objective and their gradients.

Consistency terms (``fea``, ``clu``, ``joint``) are values to maximize and
``comp`` is a value to minimize; every function returns the raw value with
the gradient of that value. :func:`overall` folds them into the single
minimized objective ``-fea - clu - gamma * joint + beta * comp``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .gram_kernel import resolve_sigma
from .renyi import DEFAULT_ORDER, mi_with_grad_fixed, mi_with_grads

TERMS = ("fea", "clu", "joint", "comp")
DENOMINATORS = ("standard", "paper")
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 0.01
    beta: float = 0.01
    tau: float = 1.0
    balance: float = 0.0
    terms: frozenset = frozenset(TERMS)

    def __post_init__(self):
        for name in ("gamma", "beta", "balance"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val >= 0):
                raise InvalidInputError(f"{name} must be finite and >= 0, got {val}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise InvalidInputError(f"tau must be positive, got {self.tau}")
        unknown = set(self.terms) - set(TERMS)
        if unknown:
            raise InvalidInputError(f"unknown loss terms {sorted(unknown)}")
        object.__setattr__(self, "terms", frozenset(self.terms))

    def coefficients(self) -> dict[str, float]:
        """Signed multipliers of each term in the minimized objective."""
        base = {"fea": -1.0, "clu": -1.0, "joint": -self.gamma, "comp": self.beta}
        return {k: (v if k in self.terms else 0.0) for k, v in base.items()}


@dataclass(frozen=True)
class SigmaPolicy:
    """Fixed bandwidth when ``fixed`` is set, otherwise median heuristic times ``multiplier``."""

    multiplier: float = 1.0
    fixed: float | None = None

    def __call__(self, M) -> float:
        return resolve_sigma(M, self.fixed, self.multiplier)


@dataclass
class LossReport:
    fea: float
    clu: float
    joint: float
    comp: float
    overall: float
    grad_norms: dict = field(default_factory=dict)
    # V(V-1) log N, dropped from ``fea`` because it does not depend on parameters
    fea_constant: float = 0.0

    def as_dict(self) -> dict:
        return {"fea": self.fea, "clu": self.clu, "joint": self.joint, "comp": self.comp,
                "overall": self.overall}


def cosine_similarity(u, v) -> float:
    u, v = np.asarray(u, float).ravel(), np.asarray(v, float).ravel()
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise InvalidInputError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


def _masked_logsumexp(logits: np.ndarray, mask: np.ndarray):
    x = np.where(mask, logits, -np.inf)
    mx = x.max(axis=1, keepdims=True)
    e = np.exp(x - mx)
    s = e.sum(axis=1, keepdims=True)
    return (mx + np.log(s))[:, 0], e / s


def contrastive(views, tau: float = 1.0, denominator: str = "standard"):
    """Multi-view contrastive consistency over rows of the given matrices.

    Row ``i`` of view ``v`` is an anchor; row ``i`` of every other view is a
    positive; rows ``j != i`` of all views are negatives. With
    ``denominator="paper"`` the softmax normalizer holds negatives only,
    with ``"standard"`` it also holds the positive.

    Returns:
        (value, grads) with one gradient array per view.
    """
    if denominator not in DENOMINATORS:
        raise InvalidInputError(f"denominator must be one of {DENOMINATORS}, got {denominator!r}")
    views = [np.asarray(h, dtype=float) for h in views]
    V = len(views)
    if V < 2:
        raise InvalidInputError("contrastive consistency needs at least two views")
    n, d = views[0].shape
    if n < 2:
        raise InvalidInputError("contrastive consistency needs at least two anchors per view")
    if any(h.shape != (n, d) for h in views):
        raise InvalidInputError("all views must share the same shape")
    norms = [np.linalg.norm(h, axis=1, keepdims=True) for h in views]
    if any(np.any(nrm == 0) for nrm in norms):
        raise InvalidInputError("cosine similarity is undefined for a zero vector")
    U = np.vstack([h / nrm for h, nrm in zip(views, norms)])
    logits = U @ U.T / tau

    owner = np.tile(np.arange(n), V)
    neg = owner[None, :] != np.arange(n)[:, None]
    rows = np.arange(n)
    d_logits = np.zeros_like(logits)
    value = 0.0
    for v in range(V):
        block = logits[v * n:(v + 1) * n]
        d_block = d_logits[v * n:(v + 1) * n]
        if denominator == "paper":
            lse, prob = _masked_logsumexp(block, neg)
        for m in range(V):
            if m == v:
                continue
            pos_col = m * n + rows
            if denominator == "standard":
                mask = neg.copy()
                mask[rows, pos_col] = True
                lse, prob = _masked_logsumexp(block, mask)
            value += float(np.mean(block[rows, pos_col] - lse))
            d_block -= prob / n
            d_block[rows, pos_col] += 1.0 / n

    dU = (d_logits + d_logits.T) @ U / tau
    grads = []
    for v, nrm in enumerate(norms):
        u, du = U[v * n:(v + 1) * n], dU[v * n:(v + 1) * n]
        grads.append((du - u * np.sum(u * du, axis=1, keepdims=True)) / nrm)
    return value, grads


def feature_consistency(H, tau: float = 1.0, denominator: str = "standard"):
    """Contrastive agreement between same-sample features across views (constant dropped)."""
    return contrastive(H, tau, denominator)


def feature_constant(V: int, n: int) -> float:
    return V * (V - 1) * math.log(n)


def check_simplex(S, name: str = "S") -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[1] < 2:
        raise InvalidInputError(f"{name} must be N x K with K >= 2, got shape {S.shape}")
    if np.any(S < -SIMPLEX_TOL) or np.any(np.abs(S.sum(axis=1) - 1.0) > SIMPLEX_TOL):
        raise InvalidInputError(f"rows of {name} are not in the probability simplex")
    return S


def balance_term(S) -> tuple[float, list[np.ndarray]]:
    """Sum over views of sum_k p_k log p_k with p the mean soft assignment (natural log)."""
    value, grads = 0.0, []
    for s in S:
        n = s.shape[0]
        p = s.mean(axis=0)
        logp = np.log(np.maximum(p, 1e-300))
        value += float(np.sum(p * logp))
        grads.append(np.broadcast_to((logp + 1.0) / n, s.shape).copy())
    return value, grads


def cluster_consistency(S, tau: float = 1.0, denominator: str = "standard", balance: float = 0.0,
                        validate: bool = True):
    """Contrastive agreement between same-cluster columns of the soft labels.

    The balance weight rewards uniform cluster usage by subtracting
    ``balance * sum p log p`` from the maximized value. ``validate=False``
    skips the simplex check (finite-difference probes step off the simplex).
    """
    if validate:
        S = [check_simplex(s, f"S[{i}]") for i, s in enumerate(S)]
    else:
        S = [np.asarray(s, dtype=float) for s in S]
    if len({s.shape for s in S}) != 1:
        raise InvalidInputError("all label matrices must share N and K")
    value, gcols = contrastive([s.T for s in S], tau, denominator)
    grads = [g.T.copy() for g in gcols]
    if balance:
        bval, bgrads = balance_term(S)
        value -= balance * bval
        grads = [g - balance * bg for g, bg in zip(grads, bgrads)]
    return value, grads


def joint_consistency(H_v, S_v, alpha: float = DEFAULT_ORDER, sigma: SigmaPolicy = SigmaPolicy(),
                      sigmas: tuple[float, float] | None = None):
    """Matrix-based MI between the Grams of features and soft labels of one view.

    ``sigmas`` pins the (features, labels) bandwidths and overrides ``sigma``.

    Returns:
        (mi, grad_H, grad_S)
    """
    H_v, S_v = np.asarray(H_v, float), np.asarray(S_v, float)
    if H_v.shape[0] != S_v.shape[0]:
        raise InvalidInputError(f"sample counts differ: {H_v.shape[0]} vs {S_v.shape[0]}")
    s_h, s_s = sigmas if sigmas is not None else (sigma(H_v), sigma(S_v))
    mi, gH, gS = mi_with_grads(H_v, S_v, s_h, s_s, alpha)
    return mi, gH, gS


def compression(X_gram, Z_v, alpha: float = DEFAULT_ORDER, sigma: SigmaPolicy = SigmaPolicy()):
    """Matrix-based MI between a fixed input Gram and the Gram of the representation."""
    Z_v = np.asarray(Z_v, float)
    return mi_with_grad_fixed(X_gram, Z_v, sigma(Z_v), alpha)


def overall(terms: dict, weights: LossWeights, fea_constant: float = 0.0):
    """Combine per-term values and gradients into the minimized objective.

    Args:
        terms: name -> (value, {target: [per-view grads]}), names from TERMS.
            Targets are e.g. "H", "S", "Z".
        weights: loss weights and enabled terms.

    Returns:
        (LossReport, {target: [per-view grads of the overall objective]})
    """
    coef = weights.coefficients()
    total = 0.0
    grads: dict[str, list[np.ndarray]] = {}
    norms = {}
    for name in TERMS:
        value, tgrads = terms[name]
        total += coef[name] * value
        sq = 0.0
        for target, glist in tgrads.items():
            acc = grads.setdefault(target, [np.zeros_like(g) for g in glist])
            for a, g in zip(acc, glist):
                a += coef[name] * g
                sq += float(np.sum(g * g))
        norms[name] = math.sqrt(sq)
    report = LossReport(
        fea=terms["fea"][0], clu=terms["clu"][0], joint=terms["joint"][0], comp=terms["comp"][0],
        overall=total, grad_norms=norms, fea_constant=fea_constant)
    return report, grads
