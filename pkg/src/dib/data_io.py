"""Multi-view datasets: synthetic generation and headerless CSV ingestion."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IngestionError, InvalidInputError


@dataclass
class MultiViewDataset:
    views: list[np.ndarray]
    labels: np.ndarray | None = None
    name: str = "dataset"
    n_clusters: int | None = None
    latent: np.ndarray | None = None

    def __post_init__(self):
        self.views = [np.asarray(v, dtype=float) for v in self.views]
        if len(self.views) < 2:
            raise InvalidInputError(f"a multi-view dataset needs at least 2 views, got {len(self.views)}")
        for i, v in enumerate(self.views):
            if v.ndim != 2:
                raise InvalidInputError(f"view {i} must be 2-D, got shape {v.shape}")
        sizes = {v.shape[0] for v in self.views}
        if len(sizes) != 1:
            raise InvalidInputError(f"views disagree on sample count: {[v.shape[0] for v in self.views]}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int).ravel()
            if self.labels.size != self.n_samples:
                raise InvalidInputError(
                    f"{self.labels.size} labels for {self.n_samples} samples")
            if self.labels.min() < 0:
                raise InvalidInputError("labels must be non-negative")
            if self.n_clusters is not None and self.labels.max() >= self.n_clusters:
                raise InvalidInputError(f"labels exceed the declared cluster count {self.n_clusters}")

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [v.shape[1] for v in self.views]


@dataclass
class SyntheticSpec:
    """Gaussian blobs in a latent space seen through random linear views.

    Cluster centers sit at unit pairwise spacing and the latent noise std is
    ``1 / separation``, so ``separation`` is the spacing-to-noise ratio and
    ``math.inf`` gives noise-free latents.
    """

    n_clusters: int = 4
    n_samples: int = 800
    view_dims: tuple = (12, 20, 16)
    separation: float = 6.0
    view_noise: float = 0.05
    latent_dim: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.view_dims = tuple(int(d) for d in self.view_dims)
        if self.n_clusters < 1 or self.n_samples < 1:
            raise ConfigError("n_clusters and n_samples must be positive")
        if len(self.view_dims) < 2 or min(self.view_dims) < 1:
            raise ConfigError(f"need >= 2 views with positive widths, got {self.view_dims}")
        if not self.separation > 0:
            raise ConfigError(f"separation must be positive, got {self.separation}")
        if not (math.isfinite(self.view_noise) and self.view_noise >= 0):
            raise ConfigError(f"view_noise must be >= 0, got {self.view_noise}")
        if self.latent_dim is not None and self.latent_dim < self.n_clusters:
            raise ConfigError("latent_dim must be at least n_clusters")

    @property
    def n_views(self) -> int:
        return len(self.view_dims)


def generate_synthetic(spec: SyntheticSpec) -> MultiViewDataset:
    rng = np.random.default_rng(spec.seed)
    K, N = spec.n_clusters, spec.n_samples
    q = spec.latent_dim or K
    # N // K per cluster, remainder handed out round-robin from cluster 0
    labels = np.arange(N) % K
    rng.shuffle(labels)
    centers = np.eye(K, q) / math.sqrt(2.0)
    noise_std = 0.0 if math.isinf(spec.separation) else 1.0 / spec.separation
    latent = centers[labels] + noise_std * rng.standard_normal((N, q))
    views = []
    for d in spec.view_dims:
        proj = rng.standard_normal((q, d)) / math.sqrt(q)
        views.append(latent @ proj + spec.view_noise * rng.standard_normal((N, d)))
    return MultiViewDataset(views, labels, name="synthetic", n_clusters=K, latent=latent)


def write_matrix_csv(path, M) -> None:
    M = np.asarray(M)
    if M.ndim == 1:
        M = M[:, None]
    fmt = "%d" if np.issubdtype(M.dtype, np.integer) else "%.17g"
    np.savetxt(path, M, fmt=fmt, delimiter=",")


def read_matrix_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"file not found: {path}")
    rows = []
    with path.open(newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                col = next(c for c, cell in enumerate(row) if not _is_float(cell))
                raise IngestionError(
                    f"{path}: non-numeric cell {row[col]!r} at row {r + 1}, column {col + 1}") from None
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise IngestionError(f"{path}: ragged rows with widths {sorted(widths)}")
    M = np.array(rows, dtype=float)
    if not np.all(np.isfinite(M)):
        raise IngestionError(f"{path}: non-finite values")
    return M


def _is_float(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def load_views(paths, label_path=None, name: str = "dataset", n_clusters: int | None = None
               ) -> MultiViewDataset:
    paths = [Path(p) for p in paths]
    views = [read_matrix_csv(p) for p in paths]
    for p, v in zip(paths[1:], views[1:]):
        if v.shape[0] != views[0].shape[0]:
            raise IngestionError(
                f"row count mismatch: {paths[0]} has {views[0].shape[0]} rows, {p} has {v.shape[0]}")
    labels = None
    if label_path is not None:
        lab = read_matrix_csv(label_path)
        if lab.shape[1] != 1:
            raise IngestionError(f"{label_path}: labels must be a single column")
        if np.any(lab != np.round(lab)):
            raise IngestionError(f"{label_path}: labels must be integers")
        if lab.shape[0] != views[0].shape[0]:
            raise IngestionError(
                f"row count mismatch: {paths[0]} has {views[0].shape[0]} rows, "
                f"{label_path} has {lab.shape[0]}")
        labels = lab[:, 0].astype(int)
    return MultiViewDataset(views, labels, name=name, n_clusters=n_clusters)


def save_dataset(dataset: MultiViewDataset, directory) -> dict:
    """Write views and labels as CSV and return a matching dataset config."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    config = {"name": dataset.name, "views": []}
    for i, v in enumerate(dataset.views):
        p = directory / f"view{i}.csv"
        write_matrix_csv(p, v)
        config["views"].append(p.name)
    if dataset.labels is not None:
        write_matrix_csv(directory / "labels.csv", dataset.labels)
        config["labels"] = "labels.csv"
    if dataset.n_clusters is not None:
        config["K"] = dataset.n_clusters
    return config


def dataset_from_config(cfg: dict, base_dir=".") -> MultiViewDataset:
    """Build a dataset from ``{name, views, labels?, K}`` or ``{synthetic: {...}}``.

    Relative paths resolve against ``base_dir``.
    """
    base = Path(base_dir)
    if "synthetic" in cfg:
        try:
            spec = SyntheticSpec(**cfg["synthetic"])
        except TypeError as exc:
            raise ConfigError(f"bad synthetic spec: {exc}") from exc
        ds = generate_synthetic(spec)
        ds.name = cfg.get("name", ds.name)
        return ds
    if "views" not in cfg:
        raise ConfigError("dataset config needs 'views' or 'synthetic'")
    resolve = lambda p: p if Path(p).is_absolute() else base / p  # noqa: E731
    labels = cfg.get("labels")
    return load_views([resolve(p) for p in cfg["views"]],
                      resolve(labels) if labels else None,
                      name=cfg.get("name", "dataset"), n_clusters=cfg.get("K"))


def load_dataset_config(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return cfg, path.parent
