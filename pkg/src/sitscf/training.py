"""Two-stage training: classifier pretraining, then noiser vs discriminator."""
from __future__ import annotations

import csv
import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

import numpy as np

from . import losses
from .data import Dataset
from .losses import LossBreakdown, LossWeights, NonFiniteLossError
from .models import (Classifier, CounterfactualPair, Discriminator, Noiser, NoiserConfig,
                     TempCNNConfig, argmax_abs)
from .nnkernel import Adam, Tensor, no_grad, ops

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassifierStageConfig:
    epochs: int = 1000
    batch_size: int = 32
    lr: float = 1e-4
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = False
    f1_average: str = "macro"


@dataclass(frozen=True)
class AdversarialStageConfig:
    epochs: int = 100
    batch_size: int = 128
    noiser_lr: float = 1e-4
    disc_lr: float = 1e-4
    weight_decay: float = 0.0
    d_steps_per_g_step: int = 1
    swap_target: str = "label"  # or "predicted"


@dataclass(frozen=True)
class TrainConfig:
    classifier: ClassifierStageConfig = ClassifierStageConfig()
    adversarial: AdversarialStageConfig = AdversarialStageConfig()
    weights: LossWeights = LossWeights()
    tempcnn: TempCNNConfig = TempCNNConfig()
    noiser: NoiserConfig = NoiserConfig()
    seed: int = 0

    def __post_init__(self):
        c, a = self.classifier, self.adversarial
        if c.epochs < 0 or a.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if min(c.batch_size, a.batch_size) < 2:
            raise ValueError("batch sizes must be at least 2")
        if min(c.lr, a.noiser_lr, a.disc_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if a.d_steps_per_g_step < 1:
            raise ValueError("d_steps_per_g_step must be >= 1")
        if c.f1_average not in ("macro", "weighted"):
            raise ValueError(f"f1_average must be 'macro' or 'weighted', got {c.f1_average!r}")
        if a.swap_target not in ("label", "predicted"):
            raise ValueError(f"swap_target must be 'label' or 'predicted', got {a.swap_target!r}")
        if self.tempcnn.series_length != self.noiser.series_length:
            raise ValueError("classifier and noiser series lengths differ")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> TrainConfig:
        return _build(cls, d)


def _build(cls, d: dict):
    kwargs = {}
    names = {f.name: f for f in fields(cls)}
    for k, v in d.items():
        if k not in names:
            raise ValueError(f"unknown field {k!r} for {cls.__name__}")
        default = getattr(cls(), k)
        if is_dataclass(default) and isinstance(v, dict):
            v = _build(type(default), v)
        kwargs[k] = v
    return cls(**kwargs)


@dataclass
class EpochStats:
    epoch: int
    loss: float | LossBreakdown
    val_f1: float | None = None
    val_swap_rate: float | None = None
    probe_loss: float | None = None


@dataclass
class History:
    epochs: list[EpochStats] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path) -> None:
        if not self.steps:
            return
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        cols = list(self.steps[0])
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(cols)
            for row in self.steps:
                w.writerow([_fmt(row[c]) for c in cols])


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def stage_rng(seed: int, stage: str) -> np.random.Generator:
    """Independent, reproducible stream per (seed, stage name)."""
    return np.random.default_rng([seed, zlib.crc32(stage.encode())])


def f1_score(y_true, y_pred, average: str = "macro") -> float:
    """F1 over the classes present in either labeling (macro or support-weighted)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    classes = np.union1d(y_true, y_pred)
    scores, support = [], []
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
        support.append(np.sum(y_true == c))
    if not scores:
        return 0.0
    if average == "weighted":
        support = np.asarray(support, dtype=float)
        return float(np.dot(scores, support) / support.sum()) if support.sum() else 0.0
    return float(np.mean(scores))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        b = perm[i:i + batch_size]
        if len(b) >= 2:  # train-mode batchnorm needs two samples
            yield b


def _check_finite(value: float, what: str, epoch: int, step: int) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"non-finite {what} at epoch {epoch}, step {step}: {value}")


def train_classifier(train: Dataset, val: Dataset, config: TrainConfig = TrainConfig(),
                     rng: np.random.Generator | None = None) -> tuple[Classifier, History]:
    """Cross-entropy training; keeps the weights with the best validation F1."""
    if len(train) == 0 or len(val) == 0:
        raise TrainingError("train and validation splits must be non-empty")
    cfg = config.classifier
    rng = rng if rng is not None else stage_rng(config.seed, "classifier")
    model = Classifier(train.n_classes, config.tempcnn, rng)
    opt = Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay,
               decoupled=cfg.decoupled_weight_decay)
    x_all, y_all = train.series, train.label_index
    history = History()
    best_f1, best_state = -1.0, model.get_state()
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        total, count = 0.0, 0
        for b in _batches(len(train), cfg.batch_size, rng):
            logits = model.logits(x_all[b], train=True, rng=rng)
            loss = -ops.mean(ops.take_rows(ops.log_softmax(logits, axis=1), y_all[b]))
            value = loss.item()
            _check_finite(value, "classifier loss", epoch, step)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += value * len(b)
            count += len(b)
            step += 1
        f1 = f1_score(val.label_index, model.predict(val.series), cfg.f1_average)
        mean_loss = total / max(count, 1)
        history.epochs.append(EpochStats(epoch, mean_loss, val_f1=f1))
        history.steps.append({"epoch": epoch, "train_loss": mean_loss, "val_f1": f1})
        if f1 > best_f1:
            best_f1, best_state = f1, model.get_state()
            history.best_epoch = epoch
        log.debug("classifier epoch %d loss %.4f val F1 %.4f", epoch, mean_loss, f1)
    model.set_state(best_state)
    return model, history


def swap_rate(classifier: Classifier, noiser: Noiser, series: np.ndarray) -> float:
    if len(series) == 0:
        return 0.0
    delta = noiser.perturb(series)
    return float(np.mean(classifier.predict(series) != classifier.predict(series + delta)))


def probe_noiser_loss(classifier: Classifier, noiser: Noiser, disc: Discriminator,
                      series: np.ndarray, targets: np.ndarray, weights: LossWeights) -> float:
    """Eval-mode value of the composite noiser loss on a fixed batch."""
    with no_grad():
        delta = noiser(series)
        x_cf = Tensor(series) + delta
        l_cl = losses.class_swap_loss_from_logits(classifier.logits(x_cf), targets)
        l_gen = losses.generator_loss_from_logits(disc.logit(x_cf))
        l_wl1 = losses.weighted_l1_loss(delta)
        _, bd = losses.noiser_total_loss(l_cl, l_gen, l_wl1, weights)
    return bd.l_noiser_total


def _set_trainable(model, flag: bool) -> None:
    for t in model.params.tensors.values():
        t.requires_grad = flag


def train_counterfactual(classifier: Classifier, train: Dataset, val: Dataset | None = None,
                         config: TrainConfig = TrainConfig(), rng: np.random.Generator | None = None,
                         probe: tuple[np.ndarray, np.ndarray] | None = None,
                         ) -> tuple[Noiser, Discriminator, History]:
    """Adversarial stage with the classifier frozen.

    Per batch: ``d_steps_per_g_step`` discriminator updates on real x against
    x + noiser(x), then one noiser update on the composite loss. The classifier
    runs in eval mode and its weights are verified unchanged at the end.
    """
    if len(train) == 0:
        raise TrainingError("training split is empty")
    cfg = config.adversarial
    weights = config.weights
    rng = rng if rng is not None else stage_rng(config.seed, "adversarial")
    noiser = Noiser(config.noiser, rng)
    disc = Discriminator(config.tempcnn, rng)
    opt_n = Adam(noiser.params, lr=cfg.noiser_lr, weight_decay=cfg.weight_decay)
    opt_d = Adam(disc.params, lr=cfg.disc_lr, weight_decay=cfg.weight_decay)

    frozen_hash = classifier.parameter_hash()
    _set_trainable(classifier, False)
    x_all = train.series
    if cfg.swap_target == "label":
        target_all = train.label_index
    else:
        target_all = classifier.predict(x_all)
    probe_targets = None
    if probe is not None:
        probe_x, probe_y = probe
        probe_targets = probe_y if cfg.swap_target == "label" else classifier.predict(probe_x)

    history = History()
    if probe is not None:
        history.epochs.append(EpochStats(0, float("nan"), probe_loss=probe_noiser_loss(
            classifier, noiser, disc, probe_x, probe_targets, weights)))
    step = 0
    try:
        for epoch in range(1, cfg.epochs + 1):
            sums = np.zeros(5)
            n_batches = 0
            for b in _batches(len(train), cfg.batch_size, rng):
                x = Tensor(x_all[b])
                n = len(b)
                delta = noiser(x, train=True, rng=rng)
                fake = Tensor(x.data + delta.data)

                _set_trainable(disc, True)
                for _ in range(cfg.d_steps_per_g_step):
                    z = disc.logit(ops.concat([x, fake]), train=True, rng=rng)
                    l_dsc = losses.discriminator_loss_from_logits(ops.rows(z, 0, n), ops.rows(z, n, 2 * n))
                    d_value = l_dsc.item()
                    _check_finite(d_value, "discriminator loss", epoch, step)
                    opt_d.zero_grad()
                    l_dsc.backward()
                    opt_d.step()

                _set_trainable(disc, False)
                x_cf = x + delta
                l_cl = losses.class_swap_loss_from_logits(classifier.logits(x_cf), target_all[b])
                l_gen = losses.generator_loss_from_logits(disc.logit(x_cf))
                l_wl1 = losses.weighted_l1_loss(delta)
                try:
                    total, bd = losses.noiser_total_loss(l_cl, l_gen, l_wl1, weights)
                except NonFiniteLossError as e:
                    raise TrainingError(f"{e} at epoch {epoch}, step {step}") from e
                opt_n.zero_grad()
                total.backward()
                opt_n.step()

                row = (bd.l_cl, bd.l_gen, bd.l_wl1, d_value, bd.l_noiser_total)
                sums += row
                n_batches += 1
                history.steps.append({
                    "epoch": epoch, "step": step, "l_cl": row[0], "l_gen": row[1], "l_wl1": row[2],
                    "l_dsc": row[3], "total": row[4],
                })
                step += 1
            m = sums / max(n_batches, 1)
            m = [float(v) for v in m]
            stats = EpochStats(epoch, LossBreakdown(m[0], m[1], m[2], m[4], m[3]))
            if val is not None and len(val):
                stats.val_swap_rate = swap_rate(classifier, noiser, val.series)
            if probe is not None:
                stats.probe_loss = probe_noiser_loss(classifier, noiser, disc, probe_x, probe_targets, weights)
            history.epochs.append(stats)
            log.debug("adversarial epoch %d %s", epoch, stats)
    finally:
        _set_trainable(classifier, True)
        _set_trainable(disc, True)
    if classifier.parameter_hash() != frozen_hash:
        raise AssertionError("classifier parameters changed during adversarial training")
    history.best_epoch = cfg.epochs
    return noiser, disc, history


def generate_counterfactuals(classifier: Classifier, noiser: Noiser, series: np.ndarray,
                             ids=None, labels=None) -> list[CounterfactualPair]:
    """Eval-mode counterfactual for every series; class ids in the pairs are 1-based."""
    series = np.asarray(series, dtype=np.float32)
    if series.ndim != 2 or series.shape[1] != noiser.cfg.series_length:
        raise ValueError(f"expected (n, {noiser.cfg.series_length}) series, got {series.shape}")
    delta = noiser.perturb(series)
    x_cf = series + delta
    y_src = classifier.predict(series) + 1
    y_cf = classifier.predict(x_cf) + 1
    t_tilde = argmax_abs(delta)
    pairs = []
    for i in range(len(series)):
        pairs.append(CounterfactualPair(
            x=series[i], delta=delta[i], x_cf=x_cf[i], t_tilde=int(t_tilde[i]),
            y_src=int(y_src[i]), y_cf=int(y_cf[i]),
            sample_id=None if ids is None else int(ids[i]),
            y_true=None if labels is None else int(labels[i]),
        ))
    return pairs
