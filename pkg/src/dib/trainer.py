"""Training loop: encoders, shared heads, loss assembly, backprop and Adam."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import losses
from .cluster_eval import evaluate, fuse_labels
from .data_io import MultiViewDataset
from .errors import ConfigError, DegenerateDataError, ShapeError, TrainingDivergedError
from .gram_kernel import gram_of
from .losses import LossReport, LossWeights, SigmaPolicy
from .neural import (AdamState, NetworkParams, NetworkSpec, adam_step, backward, forward,
                     init_network, load_checkpoint, save_checkpoint)
from .renyi import DEFAULT_ORDER, check_order

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    n_clusters: int
    epochs: int = 300
    batch_size: int = 256
    lr: float = 3e-4
    weights: LossWeights = field(default_factory=LossWeights)
    alpha: float = DEFAULT_ORDER
    sigma_multiplier: float = 1.0
    seed: int = 0
    encoder_hidden: tuple = (512, 512, 256)
    latent_dim: int = 64
    feature_hidden: int = 256
    feature_dim: int = 128
    denominator: str = "standard"
    track_metrics: bool = True

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.n_clusters < 2:
            raise ConfigError(f"need at least 2 clusters, got {self.n_clusters}")
        if not (math.isfinite(self.lr) and self.lr > 0):
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.denominator not in losses.DENOMINATORS:
            raise ConfigError(f"denominator must be one of {losses.DENOMINATORS}")
        if not self.sigma_multiplier > 0:
            raise ConfigError("sigma_multiplier must be positive")
        self.encoder_hidden = tuple(int(h) for h in self.encoder_hidden)
        check_order(self.alpha)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "weights"}
        d["encoder_hidden"] = list(self.encoder_hidden)
        w = self.weights
        d["weights"] = {"gamma": w.gamma, "beta": w.beta, "tau": w.tau, "balance": w.balance,
                        "terms": sorted(w.terms)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        d = dict(d)
        w = dict(d.pop("weights", {}))
        if "terms" in w:
            w["terms"] = frozenset(w["terms"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training options {sorted(unknown)}")
        try:
            return cls(weights=LossWeights(**w), **d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class DIBModel:
    """View-specific encoders plus a feature head and a label head shared by all views."""

    encoders: list[tuple[NetworkSpec, NetworkParams, AdamState]]
    feature_head: tuple[NetworkSpec, NetworkParams, AdamState]
    label_head: tuple[NetworkSpec, NetworkParams, AdamState]
    config: TrainConfig

    @property
    def n_views(self) -> int:
        return len(self.encoders)

    @property
    def input_dims(self) -> list[int]:
        return [spec.layer_dims[0] for spec, _, _ in self.encoders]

    def nets(self) -> dict:
        out = {f"encoder{v}": e for v, e in enumerate(self.encoders)}
        out["feature_head"] = self.feature_head
        out["label_head"] = self.label_head
        return out

    def save(self, path, extra: dict | None = None) -> None:
        meta = {"config": self.config.to_dict(), "n_views": self.n_views}
        meta.update(extra or {})
        save_checkpoint(path, self.nets(), meta)

    @classmethod
    def load(cls, path) -> DIBModel:
        nets, meta = load_checkpoint(path)
        config = TrainConfig.from_dict(meta["config"])
        encoders = [nets[f"encoder{v}"] for v in range(meta["n_views"])]
        return cls(encoders, nets["feature_head"], nets["label_head"], config)


def build_model(config: TrainConfig, input_dims) -> DIBModel:
    seeds = np.random.SeedSequence(config.seed).generate_state(len(input_dims) + 2)
    seeds = [int(s) for s in seeds]

    def make(dims, acts, seed):
        spec = NetworkSpec(dims, acts, seed)
        return spec, init_network(spec), AdamState(lr=config.lr)

    hidden = list(config.encoder_hidden)
    enc_acts = ["relu"] * len(hidden) + ["linear"]
    encoders = [make([d, *hidden, config.latent_dim], enc_acts, s)
                for d, s in zip(input_dims, seeds)]
    feature = make([config.latent_dim, config.feature_hidden, config.feature_dim],
                   ["relu", "linear"], seeds[-2])
    label = make([config.latent_dim, config.n_clusters], ["softmax"], seeds[-1])
    return DIBModel(encoders, feature, label, config)


@dataclass
class TrainHistory:
    reports: list[LossReport] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    skipped_batches: int = 0

    def __len__(self) -> int:
        return len(self.reports)

    def records(self) -> list[dict]:
        out = []
        for epoch, rep in enumerate(self.reports):
            rec = {"epoch": epoch, **rep.as_dict()}
            if epoch < len(self.metrics) and self.metrics[epoch]:
                rec.update(self.metrics[epoch])
            out.append(rec)
        return out


def _batches(perm: np.ndarray, batch_size: int) -> list[np.ndarray]:
    chunks = [perm[i:i + batch_size] for i in range(0, len(perm), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < 2:
        # a single leftover sample has no pairwise structure; fold it into the previous batch
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    return chunks


def batch_step(model: DIBModel, views: list[np.ndarray]) -> tuple[LossReport, dict]:
    """Forward pass, every loss term and full backprop for one mini-batch.

    Returns:
        (report, param_grads) with param_grads keyed like ``model.nets()``.
    """
    cfg = model.config
    w = cfg.weights
    sigma = SigmaPolicy(cfg.sigma_multiplier)
    fspec, fparams, _ = model.feature_head
    lspec, lparams, _ = model.label_head

    Z, H, S, caches = [], [], [], []
    for (espec, eparams, _), X in zip(model.encoders, views):
        z, ce = forward(espec, eparams, X)
        h, cf = forward(fspec, fparams, z)
        s, cl = forward(lspec, lparams, z)
        Z.append(z), H.append(h), S.append(s), caches.append((ce, cf, cl))

    fea, g_fea = losses.feature_consistency(H, w.tau, cfg.denominator)
    clu, g_clu = losses.cluster_consistency(S, w.tau, cfg.denominator, w.balance)
    joint, g_joint_h, g_joint_s = 0.0, [], []
    comp, g_comp = 0.0, []
    for X, z, h, s in zip(views, Z, H, S):
        mi, gh, gs = losses.joint_consistency(h, s, cfg.alpha, sigma)
        joint += mi
        g_joint_h.append(gh), g_joint_s.append(gs)
        Ax, _ = gram_of(X, multiplier=cfg.sigma_multiplier)
        mi, gz = losses.compression(Ax, z, cfg.alpha, sigma)
        comp += mi
        g_comp.append(gz)

    terms = {
        "fea": (fea, {"H": g_fea}),
        "clu": (clu, {"S": g_clu}),
        "joint": (joint, {"H": g_joint_h, "S": g_joint_s}),
        "comp": (comp, {"Z": g_comp}),
    }
    n = views[0].shape[0]
    report, grads = losses.overall(terms, w, losses.feature_constant(len(views), n))
    if not math.isfinite(report.overall):
        raise TrainingDivergedError(f"non-finite loss: {report.as_dict()}")

    f_acc, l_acc = None, None
    enc_grads = []
    for v, ((espec, eparams, _), (ce, cf, cl)) in enumerate(zip(model.encoders, caches)):
        gf, dz_f = backward(fspec, fparams, cf, grads["H"][v])
        gl, dz_l = backward(lspec, lparams, cl, grads["S"][v])
        f_acc = gf if f_acc is None else _add(f_acc, gf)
        l_acc = gl if l_acc is None else _add(l_acc, gl)
        ge, _ = backward(espec, eparams, ce, dz_f + dz_l + grads["Z"][v])
        enc_grads.append(ge)
    param_grads = {f"encoder{v}": g for v, g in enumerate(enc_grads)}
    param_grads["feature_head"] = f_acc
    param_grads["label_head"] = l_acc
    return report, param_grads


def _add(a: NetworkParams, b: NetworkParams) -> NetworkParams:
    return NetworkParams([x + y for x, y in zip(a.weights, b.weights)],
                         [x + y for x, y in zip(a.biases, b.biases)])


def _mean_report(reports: list[LossReport], weights: LossWeights) -> LossReport:
    vals = {k: float(np.mean([getattr(r, k) for r in reports])) for k in losses.TERMS}
    coef = weights.coefficients()
    total = 0.0
    for k in losses.TERMS:
        total += coef[k] * vals[k]
    norms = {k: float(np.mean([r.grad_norms[k] for r in reports])) for k in losses.TERMS}
    return LossReport(overall=total, grad_norms=norms,
                      fea_constant=float(np.mean([r.fea_constant for r in reports])), **vals)


def train(config: TrainConfig, data: MultiViewDataset, callback=None):
    """Run ``config.epochs`` epochs of mini-batch training.

    Args:
        config: training configuration.
        data: dataset with at least two views.
        callback: optional ``f(epoch, record)`` called after every epoch.

    Returns:
        (model, history)
    """
    if data.n_views < 2:
        raise ConfigError("training needs at least two views")
    model = build_model(config, data.dims)
    history = TrainHistory()
    rng = np.random.default_rng(config.seed)
    n = data.n_samples
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        reports = []
        for idx in _batches(perm, config.batch_size):
            views = [v[idx] for v in data.views]
            try:
                report, grads = batch_step(model, views)
            except DegenerateDataError as exc:
                logger.warning("epoch %d: skipping degenerate batch (%s)", epoch, exc)
                history.skipped_batches += 1
                continue
            except TrainingDivergedError as exc:
                exc.checkpoint = model
                raise
            nets = model.nets()
            for name, g in grads.items():
                _, params, adam = nets[name]
                adam_step(params, adam, g)
            reports.append(report)
        if not reports:
            raise TrainingDivergedError(f"epoch {epoch}: every batch was degenerate", model)
        history.reports.append(_mean_report(reports, config.weights))
        metrics = {}
        if config.track_metrics and data.labels is not None:
            _, assign = predict(model, data)
            metrics = evaluate(data.labels, assign).metrics()
        history.metrics.append(metrics)
        if callback is not None:
            callback(epoch, history.records()[-1])
        logger.info("epoch %d %s", epoch, history.records()[-1])
    return model, history


def predict(model: DIBModel, data: MultiViewDataset, batch_size: int = 1024):
    """Soft labels per view and fused hard assignments for the whole dataset."""
    if data.n_views < 2:
        raise ConfigError("prediction needs at least two views")
    if data.n_views != model.n_views or data.dims != model.input_dims:
        raise ShapeError(f"model expects views of widths {model.input_dims}, got {data.dims}")
    lspec, lparams, _ = model.label_head
    S = []
    for (espec, eparams, _), X in zip(model.encoders, data.views):
        parts = []
        for i in range(0, data.n_samples, batch_size):
            z, _ = forward(espec, eparams, X[i:i + batch_size])
            parts.append(forward(lspec, lparams, z)[0])
        S.append(np.vstack(parts))
    return S, fuse_labels(S)


def ablation_weights(weights: LossWeights, terms) -> LossWeights:
    return replace(weights, terms=frozenset(terms))


# scenarios of the loss-component ablation
ABLATIONS = {
    "A": ("clu",),
    "B": ("clu", "fea"),
    "C": ("clu", "fea", "joint"),
    "D": ("clu", "fea", "comp"),
    "E": ("clu", "fea", "comp", "joint"),
}
