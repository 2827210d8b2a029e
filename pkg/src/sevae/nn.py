"""MLP layers, Kaiming-uniform initialization, Adam, and JSON checkpoints."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from sevae import autodiff as ad
from sevae.errors import ConfigError, DimensionError, TrainingError

_ACTIVATIONS = {"relu": ad.relu, "tanh": ad.tanh, "identity": lambda x: x}


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass
class LinearLayer:
    weight: ad.Parameter  # (in, out)
    bias: ad.Parameter  # (1, out)

    @property
    def in_dim(self) -> int:
        return self.weight.rows

    @property
    def out_dim(self) -> int:
        return self.weight.cols

    def __call__(self, x: ad.Node) -> ad.Node:
        return ad.add(ad.matmul(x, self.weight), self.bias)


@dataclass
class Mlp:
    layers: list[LinearLayer]
    activation: str = "relu"
    final_activation: str = "identity"

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("an Mlp needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(
                    f"layer dims do not chain: {prev.weight.shape} -> {nxt.weight.shape}")
        for tag in (self.activation, self.final_activation):
            if tag not in _ACTIVATIONS:
                raise ConfigError(f"unknown activation {tag!r}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> dict[str, ad.Parameter]:
        out = {}
        for layer in self.layers:
            out[layer.weight.name] = layer.weight
            out[layer.bias.name] = layer.bias
        return out

    def __call__(self, x: ad.Node) -> ad.Node:
        return mlp_forward(self, x)


def init_mlp(dims: Sequence[int], seed=0, prefix: str = "mlp",
             activation: str = "relu", final_activation: str = "identity") -> Mlp:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    dims = list(dims)
    if len(dims) < 2:
        raise ConfigError(f"init_mlp needs at least two dims, got {dims}")
    if any(int(d) <= 0 for d in dims):
        raise ConfigError(f"all layer dims must be positive, got {dims}")
    rng = make_rng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        bound = math.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(LinearLayer(ad.Parameter(w, f"{prefix}.{i}.weight"),
                                  ad.Parameter(np.zeros((1, fan_out)), f"{prefix}.{i}.bias")))
    return Mlp(layers, activation, final_activation)


def mlp_forward(mlp: Mlp, x: ad.Node) -> ad.Node:
    if x.cols != mlp.in_dim:
        raise DimensionError(
            f"mlp input has {x.cols} columns, first layer expects {mlp.in_dim}")
    act = _ACTIVATIONS[mlp.activation]
    h = x
    for layer in mlp.layers[:-1]:
        h = act(layer(h))
    return _ACTIVATIONS[mlp.final_activation](mlp.layers[-1](h))


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, ad.Parameter], grads: Mapping[str, np.ndarray],
              state: AdamState) -> AdamState:
    """One bias-corrected Adam update.  Parameter values are replaced, not mutated."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - b1) * g if m is None else b1 * m + (1.0 - b1) * g
        v = (1.0 - b2) * g * g if v is None else b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


class Adam:
    """Thin holder pairing a parameter set with its optimizer state."""

    def __init__(self, params: Mapping[str, ad.Parameter], lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8):
        self.params = dict(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def step(self, grads: Mapping[str, np.ndarray]) -> None:
        adam_step(self.params, grads, self.state)


# ---------------------------------------------------------------------------
# checkpoint format: {param-id: {"rows", "cols", "data": flat row-major list}}

def params_to_json(params: Mapping[str, ad.Parameter]) -> dict:
    return {name: {"rows": p.rows, "cols": p.cols, "data": p.value.ravel().tolist()}
            for name, p in params.items()}


def load_params_json(params: Mapping[str, ad.Parameter], blob: Mapping) -> None:
    missing = set(params) - set(blob)
    if missing:
        raise ConfigError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
    for name, p in params.items():
        entry = blob[name]
        shape = (int(entry["rows"]), int(entry["cols"]))
        if shape != p.shape:
            raise DimensionError(
                f"checkpoint parameter {name!r} has shape {shape}, model expects {p.shape}")
        p.value = np.asarray(entry["data"], dtype=np.float64).reshape(shape)


def save_params(params: Mapping[str, ad.Parameter], path) -> None:
    Path(path).write_text(json.dumps(params_to_json(params)))


def load_params(params: Mapping[str, ad.Parameter], path) -> None:
    load_params_json(params, json.loads(Path(path).read_text()))
