"""Layer objects built from :class:`LayerSpec` rows."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from . import ops
from .tensor import Tensor

LAYER_KINDS = ("conv1d", "dense", "batchnorm", "dropout", "activation")
# uniform(-b, b) with b = sqrt(gain / fan_in); "zeros" starts the weights at 0
INIT_GAINS = {"he": 6.0, "lecun": 3.0, "fan_in": 1.0}


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int = 0
    out_dim: int = 0
    kernel: int = 0
    rate: float = 0.0
    activation: str = ""
    init: str = "he"

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d" and self.kernel % 2 != 1:
            raise ValueError(f"conv1d kernel width must be odd, got {self.kernel}")
        if self.kind == "dropout" and not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.kind == "activation" and self.activation not in ops.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.init != "zeros" and self.init not in INIT_GAINS:
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> LayerSpec:
        return cls(**d)


def _init_uniform(rng: np.random.Generator, shape, fan_in: int, mode: str) -> np.ndarray:
    if mode == "zeros":
        return np.zeros(shape, dtype=np.float32)
    bound = np.sqrt(INIT_GAINS[mode] / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    def __init__(self, spec: LayerSpec, rng: np.random.Generator | None = None):
        self.spec = spec
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self.buffers: OrderedDict[str, np.ndarray] = OrderedDict()
        s = spec
        if s.kind == "conv1d":
            fan_in = s.in_dim * s.kernel
            self.params["weight"] = Tensor(
                _init_uniform(rng, (s.out_dim, s.in_dim, s.kernel), fan_in, s.init), requires_grad=True)
            self.params["bias"] = Tensor(np.zeros(s.out_dim, np.float32), requires_grad=True)
        elif s.kind == "dense":
            self.params["weight"] = Tensor(
                _init_uniform(rng, (s.out_dim, s.in_dim), s.in_dim, s.init), requires_grad=True)
            self.params["bias"] = Tensor(np.zeros(s.out_dim, np.float32), requires_grad=True)
        elif s.kind == "batchnorm":
            self.params["gamma"] = Tensor(np.ones(s.in_dim, np.float32), requires_grad=True)
            self.params["beta"] = Tensor(np.zeros(s.in_dim, np.float32), requires_grad=True)
            self.buffers["running_mean"] = np.zeros(s.in_dim, np.float32)
            self.buffers["running_var"] = np.ones(s.in_dim, np.float32)

    def __call__(self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        s, p = self.spec, self.params
        if s.kind == "conv1d":
            return ops.conv1d(x, p["weight"], p["bias"])
        if s.kind == "dense":
            return ops.linear(x, p["weight"], p["bias"])
        if s.kind == "batchnorm":
            return ops.batchnorm(x, p["gamma"], p["beta"], self.buffers["running_mean"],
                                 self.buffers["running_var"], train)
        if s.kind == "dropout":
            return ops.dropout(x, s.rate, train, rng)
        return ops.activation(x, s.activation)


class Sequential:
    """A chain of layers with flat dotted parameter names (``"3.weight"``)."""

    def __init__(self, specs: list[LayerSpec], rng: np.random.Generator | None = None):
        self.layers = [Layer(s, rng) for s in specs]

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def __call__(self, x: Tensor, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        for layer in self.layers:
            x = layer(x, train, rng)
        return x

    def named_params(self, prefix: str = "") -> OrderedDict[str, Tensor]:
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"{prefix}{i}.{k}"] = v
        return out

    def named_buffers(self, prefix: str = "") -> OrderedDict[str, np.ndarray]:
        out = OrderedDict()
        for i, layer in enumerate(self.layers):
            for k, v in layer.buffers.items():
                out[f"{prefix}{i}.{k}"] = v
        return out
