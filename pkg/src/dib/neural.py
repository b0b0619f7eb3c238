"""Dense feed-forward networks with hand-written backprop and an Adam optimizer.

Layers compute ``y = act(x @ W + b)`` with ``W`` of shape (fan_in, fan_out).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError, InvalidStateError, ShapeError, TrainingDivergedError

ACTIVATIONS = ("relu", "linear", "softmax")
CHECKPOINT_VERSION = 1


@dataclass
class NetworkSpec:
    layer_dims: list[int]
    activations: list[str]
    seed: int = 0

    def __post_init__(self):
        self.layer_dims = [int(d) for d in self.layer_dims]
        self.activations = list(self.activations)
        if len(self.layer_dims) < 2:
            raise ConfigError("a network needs an input width and at least one layer")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ConfigError(
                f"{len(self.layer_dims) - 1} layers but {len(self.activations)} activations")
        if any(d <= 0 for d in self.layer_dims):
            raise ConfigError(f"layer widths must be positive, got {self.layer_dims}")
        for i, act in enumerate(self.activations):
            if act not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {act!r}")
            if act == "softmax" and i != len(self.activations) - 1:
                raise ConfigError("softmax is only allowed as the terminal activation")

    def to_dict(self) -> dict:
        return {"layer_dims": self.layer_dims, "activations": self.activations, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> NetworkSpec:
        return cls(d["layer_dims"], d["activations"], d.get("seed", 0))


@dataclass
class NetworkParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    # bumped on every optimizer step; forward caches remember it
    version: int = field(default=0, compare=False)

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def zeros_like(self) -> NetworkParams:
        return NetworkParams([np.zeros_like(w) for w in self.weights],
                             [np.zeros_like(b) for b in self.biases])

    def copy(self) -> NetworkParams:
        return NetworkParams([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                             self.version)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]
    outputs: list[np.ndarray]
    params_id: int
    version: int


def init_network(spec: NetworkSpec) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and zero biases."""
    rng = np.random.default_rng(spec.seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases)


def softmax(x: np.ndarray) -> np.ndarray:
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _activate(act: str, x: np.ndarray) -> np.ndarray:
    if act == "relu":
        return np.maximum(x, 0.0)
    if act == "softmax":
        return softmax(x)
    return x


def forward(spec: NetworkSpec, params: NetworkParams, X) -> tuple[np.ndarray, ForwardCache]:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != spec.layer_dims[0]:
        raise ShapeError(f"network expects input width {spec.layer_dims[0]}, got shape {X.shape}")
    inputs, outputs = [], []
    h = X
    for W, b, act in zip(params.weights, params.biases, spec.activations):
        inputs.append(h)
        h = _activate(act, h @ W + b)
        outputs.append(h)
    return h, ForwardCache(inputs, outputs, id(params), params.version)


def backward(spec: NetworkSpec, params: NetworkParams, cache: ForwardCache, upstream):
    """Reverse-mode pass.

    Returns:
        (grads, input_grad) where ``grads`` is a NetworkParams of gradients.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise InvalidStateError("forward cache is stale: parameters changed since the forward pass")
    g = np.asarray(upstream, dtype=float)
    if g.shape != cache.outputs[-1].shape:
        raise ShapeError(f"upstream gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
    n_layers = len(params.weights)
    gW: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in reversed(range(n_layers)):
        act, out = spec.activations[i], cache.outputs[i]
        if act == "relu":
            g = g * (out > 0)
        elif act == "softmax":
            g = out * (g - np.sum(g * out, axis=1, keepdims=True))
        gW[i] = cache.inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        g = g @ params.weights[i].T
    return NetworkParams(gW, gb), g


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
                "step": self.step}


def adam_step(params: NetworkParams, state: AdamState, grads: NetworkParams):
    """Bias-corrected Adam update, applied in place."""
    p_arrays, g_arrays = params.arrays(), grads.arrays()
    if len(p_arrays) != len(g_arrays) or any(p.shape != g.shape for p, g in zip(p_arrays, g_arrays)):
        raise ShapeError("gradient shapes do not match parameter shapes")
    if not all(np.all(np.isfinite(g)) for g in g_arrays):
        raise TrainingDivergedError("non-finite gradient passed to the optimizer")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in p_arrays]
        state.v = [np.zeros_like(p) for p in p_arrays]
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(p_arrays, g_arrays, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    params.version += 1
    return params, state


def save_checkpoint(path, nets: dict, meta: dict | None = None) -> None:
    """Write networks to a single ``.npz`` file.

    Args:
        path: destination file.
        nets: name -> (NetworkSpec, NetworkParams, AdamState or None).
        meta: extra JSON-serializable metadata (config, class count, ...).
    """
    arrays: dict[str, np.ndarray] = {}
    header = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "nets": {}}
    for name, (spec, params, adam) in nets.items():
        if "/" in name:
            raise InvalidInputError(f"network name may not contain '/': {name!r}")
        entry = {"spec": spec.to_dict(), "n_layers": len(params.weights), "adam": None}
        for i, (W, b) in enumerate(zip(params.weights, params.biases)):
            arrays[f"{name}/W{i}"] = W
            arrays[f"{name}/b{i}"] = b
        if adam is not None:
            entry["adam"] = adam.hyper()
            if adam.m is not None:
                for j, (m, v) in enumerate(zip(adam.m, adam.v)):
                    arrays[f"{name}/m{j}"] = m
                    arrays[f"{name}/v{j}"] = v
        header["nets"][name] = entry
    arrays["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[dict, dict]:
    """Inverse of :func:`save_checkpoint`; returns (nets, meta)."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("version") != CHECKPOINT_VERSION:
            raise InvalidInputError(f"unsupported checkpoint version {header.get('version')}")
        nets = {}
        for name, entry in header["nets"].items():
            spec = NetworkSpec.from_dict(entry["spec"])
            n = entry["n_layers"]
            params = NetworkParams([data[f"{name}/W{i}"] for i in range(n)],
                                   [data[f"{name}/b{i}"] for i in range(n)])
            adam = None
            if entry["adam"] is not None:
                adam = AdamState(**entry["adam"])
                if f"{name}/m0" in data:
                    k = 2 * n
                    adam.m = [data[f"{name}/m{j}"] for j in range(k)]
                    adam.v = [data[f"{name}/v{j}"] for j in range(k)]
            nets[name] = (spec, params, adam)
    return nets, header["meta"]
