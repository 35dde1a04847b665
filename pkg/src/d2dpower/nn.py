"""MLP building block, Adam, gradient checking, and checkpoint files.

Parameters live in a plain dict of named Tensors (insertion-ordered, so
iteration is deterministic). Everything here runs on the autodiff primitives
so any composition of these pieces stays differentiable end to end.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import CheckpointError, ConfigError

ACTIVATIONS = {
    "relu": ad.relu,
    "tanh": ad.tanh,
    "sigmoid": ad.sigmoid,
    "identity": lambda t: t,
}

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Fully connected stack: widths [in, ..., out], one hidden activation."""

    layer_widths: tuple
    activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ConfigError("MlpSpec needs at least one layer (two widths)")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigError(f"widths must be positive, got {self.layer_widths}")
        for name in (self.activation, self.output_activation):
            if name not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {name!r}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    def n_params(self) -> int:
        widths = self.layer_widths
        return sum(widths[i] * widths[i + 1] + widths[i + 1] for i in range(self.n_layers))

    def to_dict(self) -> dict:
        return {
            "layer_widths": list(self.layer_widths),
            "activation": self.activation,
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(
            layer_widths=tuple(d["layer_widths"]),
            activation=d["activation"],
            output_activation=d["output_activation"],
        )


def init_params(spec: MlpSpec, seed: int, prefix: str = "") -> dict:
    """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    widths = spec.layer_widths
    for layer in range(spec.n_layers):
        fan_in, fan_out = widths[layer], widths[layer + 1]
        bound = np.sqrt(6.0 / fan_in)
        params[f"{prefix}W{layer}"] = ad.Tensor(
            rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True
        )
        params[f"{prefix}b{layer}"] = ad.Tensor(np.zeros(fan_out), requires_grad=True)
    return params


def mlp_forward(params: dict, spec: MlpSpec, x: ad.Tensor, prefix: str = "") -> ad.Tensor:
    if x.data.ndim != 2 or x.data.shape[1] != spec.layer_widths[0]:
        raise ValueError(
            f"input must be (rows, {spec.layer_widths[0]}), got {x.data.shape}"
        )
    h = x
    for layer in range(spec.n_layers):
        try:
            weight = params[f"{prefix}W{layer}"]
            bias = params[f"{prefix}b{layer}"]
        except KeyError as missing:
            raise ValueError(f"missing parameter {missing.args[0]!r}") from None
        expected = (spec.layer_widths[layer], spec.layer_widths[layer + 1])
        if weight.data.shape != expected or bias.data.shape != expected[1:]:
            raise ValueError(f"parameter shapes do not match spec at layer {layer}")
        h = ad.add(ad.matmul(h, weight), bias)
        last = layer == spec.n_layers - 1
        h = ACTIVATIONS[spec.output_activation if last else spec.activation](h)
    return h


@dataclass
class AdamState:
    """Per-parameter moment estimates plus hyperparameters."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(params: dict, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
    for name, p in params.items():
        state.m[name] = np.zeros_like(p.data)
        state.v[name] = np.zeros_like(p.data)
    return state


def adam_step(params: dict, state: AdamState) -> None:
    """One bias-corrected Adam update in place; reads Tensor.grad."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    state.t += 1
    correct1 = 1.0 - state.beta1**state.t
    correct2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)


def finite_diff_check(f, params: dict, step: float = 1e-5) -> float:
    """Max relative error between tape gradients of f and central differences.

    f maps the params dict to a scalar Tensor. The relative error per
    coordinate uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not step > 0:
        raise ValueError("step must be > 0")
    with ad.Tape() as tape:
        out = f(params)
    ad.backward(tape, out)
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
        for name, p in params.items()
    }
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        flat_analytic = np.asarray(analytic[name]).reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            f_plus = float(f(params).data)
            flat[i] = saved - step
            f_minus = float(f(params).data)
            flat[i] = saved
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(flat_analytic[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def save_checkpoint(path, params: dict, meta: dict) -> None:
    """Single JSON file: format version, metadata, named float64 parameters.

    Values are raw little-endian bytes in base64, so load is bit-exact.
    """
    entries = []
    for name, p in params.items():
        data = np.ascontiguousarray(p.data, dtype="<f8")
        entries.append(
            {
                "name": name,
                "shape": list(data.shape),
                "data": base64.b64encode(data.tobytes()).decode("ascii"),
            }
        )
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "meta": meta,
        "params": entries,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path):
    """Read a checkpoint file back into (params, meta)."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"{path} is not a checkpoint file")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version!r}")
    params = {}
    for entry in payload["params"]:
        name = entry["name"]
        if name in params:
            raise CheckpointError(f"duplicate parameter {name!r} in {path}")
        shape = tuple(entry["shape"])
        raw = base64.b64decode(entry["data"])
        arr = np.frombuffer(raw, dtype="<f8")
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise CheckpointError(f"parameter {name!r} has wrong byte length")
        params[name] = ad.Tensor(arr.reshape(shape).copy(), requires_grad=True)
    return params, payload.get("meta", {})
