"""Transition matrices, perturbation statistics, plausibility scoring."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import CLASS_NAMES
from ..losses import modulo_distance
from ..models import CounterfactualPair
from .iforest import IsolationForest


@dataclass
class TransitionMatrix:
    counts: np.ndarray  # row: source class, column: counterfactual class (0-based)
    class_names: tuple[str, ...] = CLASS_NAMES

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def swap_rate(self) -> float:
        return 1.0 - float(np.trace(self.counts)) / self.total if self.total else 0.0

    def __getitem__(self, key):
        """1-based class ids: ``tm[src, dst]``."""
        src, dst = key
        return int(self.counts[src - 1, dst - 1])

    def write_csv(self, path, split: str = "test") -> None:
        k = len(self.counts)
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["split", "source"] + [str(c) for c in range(1, k + 1)])
            for i in range(k):
                w.writerow([split, i + 1] + [int(v) for v in self.counts[i]])

    def chord_data(self) -> dict:
        nodes = [{"id": i + 1, "name": name} for i, name in enumerate(self.class_names)]
        edges = [
            {"source": i + 1, "target": j + 1, "weight": int(self.counts[i, j])}
            for i in range(len(self.counts)) for j in range(len(self.counts))
            if i != j and self.counts[i, j] > 0
        ]
        return {"nodes": nodes, "edges": edges}


def transition_matrix(pairs: Sequence[CounterfactualPair], n_classes: int = len(CLASS_NAMES),
                      class_names: tuple[str, ...] | None = None) -> TransitionMatrix:
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p in pairs:
        if p.y_src is None or p.y_cf is None:
            raise ValueError("pair has no predicted labels")
        if not (1 <= p.y_src <= n_classes and 1 <= p.y_cf <= n_classes):
            raise ValueError(f"label out of range 1..{n_classes}: {p.y_src} -> {p.y_cf}")
        counts[p.y_src - 1, p.y_cf - 1] += 1
    names = class_names or (CLASS_NAMES if n_classes == len(CLASS_NAMES)
                            else tuple(str(i) for i in range(1, n_classes + 1)))
    return TransitionMatrix(counts, tuple(names))


def localization_curve(delta: np.ndarray, t_tilde: np.ndarray | None = None) -> np.ndarray:
    """Per-sample share of sum|delta| within circular radius r of t~, r = 0..T//2.

    Rows with an all-zero perturbation count as fully localized.
    """
    delta = np.atleast_2d(np.asarray(delta, dtype=np.float64))
    n, length = delta.shape
    mag = np.abs(delta)
    if t_tilde is None:
        t_tilde = mag.argmax(axis=1)
    dist = modulo_distance(np.arange(length)[None, :], np.asarray(t_tilde)[:, None], length)
    total = mag.sum(axis=1)
    radii = np.arange(length // 2 + 1)
    within = np.stack([(mag * (dist <= r)).sum(axis=1) for r in radii], axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total[:, None] > 0, within / total[:, None], 1.0)
    return np.minimum(frac, 1.0)


@dataclass
class PerturbationStats:
    n: int
    l2_mean: float
    l2_std: float
    l1_mean: float
    l1_std: float
    swap_rate: float
    swap_rate_correct: float | None
    n_correct: int | None
    localization: list[float]
    out_of_range: int

    def localization_at(self, radius: int) -> float:
        return self.localization[min(radius, len(self.localization) - 1)]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def perturbation_stats(pairs: Sequence[CounterfactualPair]) -> PerturbationStats:
    """Norms of delta, swap rates (all samples and correctly classified ones), localization.

    The restricted swap rate needs ``y_true`` on the pairs and is None otherwise.
    """
    if not pairs:
        raise ValueError("no counterfactual pairs to summarize")
    delta = np.stack([p.delta for p in pairs]).astype(np.float64)
    x_cf = np.stack([p.x_cf for p in pairs])
    l2 = np.linalg.norm(delta, axis=1)
    l1 = np.abs(delta).sum(axis=1)
    success = np.array([p.success for p in pairs])
    swap_correct, n_correct = None, None
    if all(p.y_true is not None for p in pairs):
        correct = np.array([p.y_src == p.y_true for p in pairs])
        n_correct = int(correct.sum())
        swap_correct = float(success[correct].mean()) if n_correct else 0.0
    curve = localization_curve(delta, np.array([p.t_tilde for p in pairs])).mean(axis=0)
    return PerturbationStats(
        n=len(pairs),
        l2_mean=float(l2.mean()), l2_std=float(l2.std()),
        l1_mean=float(l1.mean()), l1_std=float(l1.std()),
        swap_rate=float(success.mean()),
        swap_rate_correct=swap_correct, n_correct=n_correct,
        localization=[float(v) for v in curve],
        out_of_range=int(np.any(np.abs(x_cf) > 1.0, axis=1).sum()),
    )


@dataclass
class AveragePerturbation:
    source: int
    target: int
    support: int
    mean: np.ndarray | None
    std: np.ndarray | None

    @property
    def has_support(self) -> bool:
        return self.support > 0


def average_perturbation(pairs: Sequence[CounterfactualPair], source: int, target: int) -> AveragePerturbation:
    """Per-time mean and std of delta over successful pairs going source -> target."""
    sel = [p.delta for p in pairs if p.y_src == source and p.y_cf == target and p.success]
    if not sel:
        return AveragePerturbation(source, target, 0, None, None)
    d = np.stack(sel).astype(np.float64)
    return AveragePerturbation(source, target, len(sel), d.mean(axis=0), d.std(axis=0))


def entropy(labels) -> float:
    _, counts = np.unique(labels, return_counts=True)
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def mutual_information(u, v) -> float:
    u = np.asarray(u)
    v = np.asarray(v)
    if len(u) != len(v):
        raise ValueError("labelings differ in length")
    _, ui = np.unique(u, return_inverse=True)
    _, vi = np.unique(v, return_inverse=True)
    joint = np.zeros((ui.max() + 1, vi.max() + 1))
    np.add.at(joint, (ui, vi), 1)
    pxy = joint / len(u)
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float((pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])).sum())


def normalized_mutual_information(u, v) -> float:
    """2 I(U;V) / (H(U) + H(V)); defined as 0 when both entropies vanish."""
    denom = entropy(u) + entropy(v)
    if denom == 0:
        return 0.0
    return float(np.clip(2.0 * mutual_information(u, v) / denom, 0.0, 1.0))


@dataclass
class PlausibilityReport:
    contingency: np.ndarray  # rows: real inlier/outlier, columns: counterfactual inlier/outlier
    accuracy: float
    nmi: float
    inlier_ratio: float
    real_inlier_ratio: float
    threshold: float
    contamination: float

    @property
    def total(self) -> int:
        return int(self.contingency.sum())

    def to_dict(self) -> dict:
        return {
            "contingency": self.contingency.tolist(),
            "accuracy": self.accuracy,
            "nmi": self.nmi,
            "inlier_ratio": self.inlier_ratio,
            "real_inlier_ratio": self.real_inlier_ratio,
            "threshold": self.threshold,
            "contamination": self.contamination,
            "n": self.total,
        }


def plausibility_report(forest: IsolationForest, real, cf, contamination: float = 0.1) -> PlausibilityReport:
    """Compare inlier/outlier labels of real series and their counterfactuals.

    A series is an outlier when its score exceeds the (1 - contamination)
    quantile of the real-series scores.
    """
    real = np.asarray(real, dtype=np.float64)
    cf = np.asarray(cf, dtype=np.float64)
    if real.shape != cf.shape:
        raise ValueError(f"real and counterfactual sets differ in shape: {real.shape} vs {cf.shape}")
    s_real = forest.score(real)
    s_cf = forest.score(cf)
    threshold = float(np.quantile(s_real, 1.0 - contamination))
    out_real = (s_real > threshold).astype(int)
    out_cf = (s_cf > threshold).astype(int)
    table = np.zeros((2, 2), dtype=np.int64)
    np.add.at(table, (out_real, out_cf), 1)
    return PlausibilityReport(
        contingency=table,
        accuracy=float(np.trace(table) / table.sum()),
        nmi=normalized_mutual_information(out_real, out_cf),
        inlier_ratio=float(1.0 - out_cf.mean()),
        real_inlier_ratio=float(1.0 - out_real.mean()),
        threshold=threshold,
        contamination=contamination,
    )


def write_average_perturbation(avg: AveragePerturbation, path, split: str = "test") -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["split", "source", "target", "support", "t", "mean", "std"])
        for t in range(len(avg.mean)):
            w.writerow([split, avg.source, avg.target, avg.support, t,
                        f"{avg.mean[t]:.6g}", f"{avg.std[t]:.6g}"])
