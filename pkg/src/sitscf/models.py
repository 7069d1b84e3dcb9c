"""TempCNN classifier, MLP noiser, TempCNN discriminator and x_cf = x + delta."""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import asdict, dataclass, field

import numpy as np

from .nnkernel import LayerSpec, ParameterSet, Sequential, Tensor, no_grad, ops
from .nnkernel.tensor import ShapeError


@dataclass(frozen=True)
class TempCNNConfig:
    series_length: int = 24
    n_blocks: int = 3
    channels: int = 64
    kernel: int = 5
    dense_width: int = 256
    dropout: float = 0.5


@dataclass(frozen=True)
class NoiserConfig:
    series_length: int = 24
    hidden: int = 128
    n_hidden: int = 2
    dropout: float = 0.5
    zero_output_init: bool = True


def tempcnn_body_specs(cfg: TempCNNConfig) -> list[LayerSpec]:
    specs = []
    c_in = 1
    for _ in range(cfg.n_blocks):
        specs += [
            LayerSpec("conv1d", in_dim=c_in, out_dim=cfg.channels, kernel=cfg.kernel),
            LayerSpec("batchnorm", in_dim=cfg.channels),
            LayerSpec("activation", activation="relu"),
            LayerSpec("dropout", rate=cfg.dropout),
        ]
        c_in = cfg.channels
    return specs


def tempcnn_head_specs(cfg: TempCNNConfig, n_out: int) -> list[LayerSpec]:
    flat = cfg.channels * cfg.series_length
    return [
        LayerSpec("dense", in_dim=flat, out_dim=cfg.dense_width),
        LayerSpec("activation", activation="relu"),
        LayerSpec("dropout", rate=cfg.dropout),
        # small output layer: a fresh classifier starts close to uniform
        LayerSpec("dense", in_dim=cfg.dense_width, out_dim=n_out, init="fan_in"),
    ]


def _as_batch(x, length: int) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float32))
    if t.data.ndim == 1:
        t = ops.reshape(t, (1, -1))
    if t.data.ndim != 2 or t.shape[1] != length:
        raise ShapeError(f"expected series of length T={length}, got array of shape {t.shape}")
    return t


class Model:
    """Shared bookkeeping: named parameters, buffers, hashing."""

    kind = ""

    def __init__(self):
        self._seqs: OrderedDict[str, Sequential] = OrderedDict()
        self.params: ParameterSet | None = None

    def _finish(self) -> None:
        named = []
        for prefix, seq in self._seqs.items():
            named += list(seq.named_params(prefix + ".").items())
        self.params = ParameterSet(named)

    def named_buffers(self) -> OrderedDict[str, np.ndarray]:
        out = OrderedDict()
        for prefix, seq in self._seqs.items():
            out.update(seq.named_buffers(prefix + "."))
        return out

    def layer_specs(self) -> dict[str, list[dict]]:
        return {prefix: [s.to_dict() for s in seq.specs] for prefix, seq in self._seqs.items()}

    def state_arrays(self) -> OrderedDict[str, np.ndarray]:
        """Parameters then buffers, in a fixed order."""
        out = OrderedDict((k, t.data) for k, t in self.params.items())
        out.update(self.named_buffers())
        return out

    def get_state(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((k, v.copy()) for k, v in self.state_arrays().items())

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        buffers = self.named_buffers()
        for name in list(self.params) + list(buffers):
            if name not in state:
                raise KeyError(f"state has no entry for {name!r}")
        for name, t in self.params.items():
            arr = np.asarray(state[name], dtype=np.float32)
            if arr.shape != t.shape:
                raise ShapeError(f"{name!r}: state shape {arr.shape} != parameter shape {t.shape}")
            t.data = arr.copy()
        for name, buf in buffers.items():
            arr = np.asarray(state[name], dtype=np.float32)
            if arr.shape != buf.shape:
                raise ShapeError(f"{name!r}: state shape {arr.shape} != buffer shape {buf.shape}")
            buf[...] = arr

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for name, arr in self.state_arrays().items():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        return h.hexdigest()

    def architecture(self) -> dict:
        raise NotImplementedError


class TempCNN(Model):
    def __init__(self, cfg: TempCNNConfig, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.n_out = n_out
        self._seqs["body"] = Sequential(tempcnn_body_specs(cfg), rng)
        self._seqs["head"] = Sequential(tempcnn_head_specs(cfg, n_out), rng)
        self._finish()

    @property
    def body(self) -> Sequential:
        return self._seqs["body"]

    @property
    def head(self) -> Sequential:
        return self._seqs["head"]

    def raw_output(self, x, train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        t = _as_batch(x, self.cfg.series_length)
        h = self.body(ops.reshape(t, (t.shape[0], t.shape[1], 1)), train, rng)
        h = ops.reshape(h, (h.shape[0], -1))
        return self.head(h, train, rng)


class Classifier(TempCNN):
    kind = "classifier"

    def __init__(self, n_classes: int, cfg: TempCNNConfig = TempCNNConfig(), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(cfg, n_classes, rng)
        self.n_classes = n_classes

    def logits(self, x, train: bool = False, rng=None) -> Tensor:
        return self.raw_output(x, train, rng)

    def forward(self, x, train: bool = False, rng=None) -> Tensor:
        """Class-probability rows (softmax over K)."""
        return ops.softmax(self.logits(x, train, rng), axis=1)

    __call__ = forward

    def predict(self, x, batch_size: int = 1024) -> np.ndarray:
        """0-based argmax class index per series, eval mode."""
        x = np.asarray(x, dtype=np.float32)
        out = []
        with no_grad():
            for i in range(0, len(x), batch_size):
                out.append(self.logits(x[i:i + batch_size]).data.argmax(axis=1))
        return np.concatenate(out) if out else np.zeros(0, dtype=int)

    def architecture(self) -> dict:
        return {"n_classes": self.n_classes, "tempcnn": asdict(self.cfg)}


class Discriminator(TempCNN):
    kind = "discriminator"

    def __init__(self, cfg: TempCNNConfig = TempCNNConfig(), rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        super().__init__(cfg, 1, rng)

    def logit(self, x, train: bool = False, rng=None) -> Tensor:
        z = self.raw_output(x, train, rng)
        return ops.reshape(z, (z.shape[0],))

    def forward(self, x, train: bool = False, rng=None) -> Tensor:
        """Probability of being real, one score per series."""
        return ops.sigmoid(self.logit(x, train, rng))

    __call__ = forward

    def architecture(self) -> dict:
        return {"tempcnn": asdict(self.cfg)}


class Noiser(Model):
    """MLP mapping a series to a perturbation in (-1, 1)^T.

    Hidden layers are dense -> batchnorm -> tanh -> dropout; the output layer
    is dense -> tanh and starts at zero so early perturbations vanish.
    """

    kind = "noiser"

    def __init__(self, cfg: NoiserConfig = NoiserConfig(), rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.cfg = cfg
        specs = []
        width = cfg.series_length
        for _ in range(cfg.n_hidden):
            specs += [
                LayerSpec("dense", in_dim=width, out_dim=cfg.hidden, init="lecun"),
                LayerSpec("batchnorm", in_dim=cfg.hidden),
                LayerSpec("activation", activation="tanh"),
                LayerSpec("dropout", rate=cfg.dropout),
            ]
            width = cfg.hidden
        specs += [
            LayerSpec("dense", in_dim=width, out_dim=cfg.series_length,
                      init="zeros" if cfg.zero_output_init else "lecun"),
            LayerSpec("activation", activation="tanh"),
        ]
        self._seqs["mlp"] = Sequential(specs, rng)
        self._finish()

    @property
    def mlp(self) -> Sequential:
        return self._seqs["mlp"]

    def forward(self, x, train: bool = False, rng=None) -> Tensor:
        return self.mlp(_as_batch(x, self.cfg.series_length), train, rng)

    __call__ = forward

    def perturb(self, x, batch_size: int = 1024) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        out = []
        with no_grad():
            for i in range(0, len(x), batch_size):
                out.append(self.forward(x[i:i + batch_size]).data)
        return np.concatenate(out) if out else np.zeros((0, self.cfg.series_length), np.float32)

    def architecture(self) -> dict:
        return {"noiser": asdict(self.cfg)}


def same_body(a: TempCNN, b: TempCNN) -> bool:
    return a.body.specs == b.body.specs


def argmax_abs(delta: np.ndarray) -> np.ndarray | int:
    """Index of the largest |delta| along the last axis, lowest index on ties."""
    return np.argmax(np.abs(np.asarray(delta)), axis=-1)


@dataclass
class CounterfactualPair:
    x: np.ndarray
    delta: np.ndarray
    x_cf: np.ndarray
    t_tilde: int
    y_src: int | None = None
    y_cf: int | None = None
    sample_id: int | None = None
    y_true: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.y_src is not None and self.y_cf is not None and self.y_cf != self.y_src


def compose_counterfactual(x, delta) -> CounterfactualPair:
    """x_cf = x + delta, unclipped; labels are left for the caller."""
    x = np.asarray(x, dtype=np.float32)
    delta = np.asarray(delta, dtype=np.float32)
    if x.shape != delta.shape or x.ndim != 1:
        raise ShapeError(f"series and perturbation lengths differ: {x.shape} vs {delta.shape}")
    return CounterfactualPair(x=x, delta=delta, x_cf=x + delta, t_tilde=int(argmax_abs(delta)))
