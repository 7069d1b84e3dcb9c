"""Datasets: CSV ingestion, stratified splits, synthetic NDVI profiles."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

SERIES_LENGTH = 24

CLASS_NAMES = (
    "Cereals",
    "Cotton",
    "Oleaginous",
    "Grassland",
    "Shrubland",
    "Forest",
    "Bare soil",
    "Water",
)

# Double-logistic phenology per class, one row each:
#   base, amplitude, green-up centre, green-up width, senescence centre, senescence width
# Time is the index 0..23 (two samples per month). Crops share a short strong
# season, natural vegetation a higher and longer one, bare soil is almost
# flat and water stays negative throughout.
TEMPLATE_PARAMS = np.array([
    [0.18, 0.50, 12.5, 0.8, 18.5, 0.8],   # Cereals
    [0.18, 0.58, 13.5, 0.8, 20.0, 0.9],   # Cotton
    [0.18, 0.42, 12.0, 0.7, 17.0, 0.7],   # Oleaginous
    [0.22, 0.40, 11.0, 1.2, 19.0, 1.0],   # Grassland
    [0.28, 0.36, 10.0, 1.5, 20.5, 1.3],   # Shrubland
    [0.40, 0.35, 9.0, 1.8, 21.5, 1.5],    # Forest
    [0.12, 0.10, 12.0, 1.0, 17.0, 1.0],   # Bare soil
    [-0.35, 0.10, 12.0, 1.5, 19.0, 1.5],  # Water
])


class DataError(ValueError):
    """Malformed or out-of-domain input data."""


class Sample(NamedTuple):
    id: int
    label: int
    series: np.ndarray


@dataclass
class Dataset:
    ids: np.ndarray
    labels: np.ndarray  # class ids 1..K
    series: np.ndarray  # (n, T) float32
    class_names: tuple[str, ...] = CLASS_NAMES
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.series = np.asarray(self.series, dtype=np.float32)
        if self.series.ndim != 2 or len(self.series) != len(self.ids) or len(self.ids) != len(self.labels):
            raise DataError("ids, labels and series must have matching lengths")
        if len(np.unique(self.ids)) != len(self.ids):
            raise DataError("sample ids must be unique")

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def length(self) -> int:
        return self.series.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def label_index(self) -> np.ndarray:
        """0-based class indices."""
        return self.labels - 1

    @property
    def samples(self) -> list[Sample]:
        return [Sample(int(i), int(y), s) for i, y, s in zip(self.ids, self.labels, self.series)]

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.ids[idx], self.labels[idx], self.series[idx], self.class_names, dict(self.meta))


def double_logistic(t: np.ndarray, base, amplitude, sos, r_sos, eos, r_eos) -> np.ndarray:
    up = 1.0 / (1.0 + np.exp(-(t - sos) / r_sos))
    down = 1.0 / (1.0 + np.exp((t - eos) / r_eos))
    return base + amplitude * (up + down - 1.0)


def templates(length: int = SERIES_LENGTH) -> np.ndarray:
    """(K, length) class templates; the phenology is stretched to fit ``length``."""
    t = np.arange(length) * (SERIES_LENGTH / length)
    return np.stack([double_logistic(t, *row) for row in TEMPLATE_PARAMS]).astype(np.float32)


def synth_generate(n_per_class: int, seed: int = 0, noise_sigma: float = 0.02,
                   length: int = SERIES_LENGTH) -> Dataset:
    """Class templates plus i.i.d. Gaussian noise, clipped to [-1, 1]."""
    if n_per_class < 1:
        raise DataError(f"n_per_class must be >= 1, got {n_per_class}")
    if noise_sigma < 0:
        raise DataError(f"noise_sigma must be >= 0, got {noise_sigma}")
    rng = np.random.default_rng(seed)
    tpl = templates(length)
    k = len(tpl)
    labels = np.repeat(np.arange(1, k + 1), n_per_class)
    series = tpl[labels - 1].astype(np.float64)
    if noise_sigma > 0:
        series = series + rng.normal(0.0, noise_sigma, size=series.shape)
    series = np.clip(series, -1.0, 1.0).astype(np.float32)
    meta = {
        "generator": "double_logistic_templates",
        "n_per_class": n_per_class,
        "seed": seed,
        "noise_sigma": noise_sigma,
        "length": length,
        "template_params": TEMPLATE_PARAMS.tolist(),
        "class_names": list(CLASS_NAMES),
    }
    return Dataset(np.arange(len(labels)), labels, series, CLASS_NAMES, meta)


def write_csv(dataset: Dataset, path, sidecar: bool = True) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "label"] + [f"t{i}" for i in range(dataset.length)])
        for i, y, s in zip(dataset.ids, dataset.labels, dataset.series):
            w.writerow([int(i), int(y)] + [f"{v:.6f}" for v in s])
    if sidecar and dataset.meta:
        meta_path = path.with_suffix(".json")
        meta_path.write_text(json.dumps(dataset.meta, indent=2, sort_keys=True) + "\n")
    return path


def load_csv(path, class_names: tuple[str, ...] = CLASS_NAMES) -> Dataset:
    """Read ``id,label,t0,...`` rows; labels must be 1..len(class_names)."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["id", "label"] or len(header) < 3:
            raise DataError(f"{path}: header must start with id,label followed by time columns")
        n_t = len(header) - 2
        if header[2:] != [f"t{i}" for i in range(n_t)]:
            raise DataError(f"{path}: time columns must be named t0..t{n_t - 1}")
        ids, labels, rows = [], [], []
        k = len(class_names)
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_t + 2:
                raise DataError(
                    f"{path}: row {row_no} has {len(row) - 2} time columns, expected {n_t}")
            try:
                sid = int(row[0])
                label = int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as e:
                raise DataError(f"{path}: row {row_no} is malformed ({e})") from None
            if not 1 <= label <= k:
                raise DataError(f"{path}: row {row_no} has unknown label {label} (expected 1..{k})")
            arr = np.asarray(values)
            if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
                raise DataError(f"{path}: row {row_no} has a value outside [-1, 1]")
            ids.append(sid)
            labels.append(label)
            rows.append(arr)
    if not rows:
        raise DataError(f"{path}: no samples")
    meta = {}
    meta_path = path.with_suffix(".json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
    return Dataset(np.array(ids), np.array(labels), np.stack(rows), tuple(class_names), meta)


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.50
    val: float = 0.17
    test: float = 0.33
    seed: int = 0
    stratified: bool = True

    def __post_init__(self):
        fr = (self.train, self.val, self.test)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-6:
            raise DataError(f"split fractions must be non-negative and sum to 1, got {fr}")


def _allocate(n: int, fractions: tuple[float, ...]) -> list[int]:
    """Largest-remainder rounding with every non-zero fraction getting >= 1 sample."""
    raw = np.asarray(fractions) * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    for i in range(len(counts)):
        if fractions[i] > 0 and counts[i] == 0:
            j = int(np.argmax(counts))
            counts[j] -= 1
            counts[i] += 1
    return counts.tolist()


def split_dataset(dataset: Dataset, spec: SplitSpec = SplitSpec()) -> tuple[Dataset, Dataset, Dataset]:
    if len(dataset) == 0:
        raise DataError("cannot split an empty dataset")
    fractions = (spec.train, spec.val, spec.test)
    n_parts = sum(f > 0 for f in fractions)
    rng = np.random.default_rng(spec.seed)
    groups = [np.arange(len(dataset))]
    if spec.stratified:
        groups = [np.flatnonzero(dataset.labels == c) for c in np.unique(dataset.labels)]
    parts: list[list[np.ndarray]] = [[], [], []]
    for idx in groups:
        if len(idx) < n_parts:
            label = int(dataset.labels[idx[0]])
            raise DataError(f"class {label} has {len(idx)} samples, fewer than the {n_parts} splits")
        idx = rng.permutation(idx)
        start = 0
        for p, count in enumerate(_allocate(len(idx), fractions)):
            parts[p].append(idx[start:start + count])
            start += count
    return tuple(dataset.subset(np.sort(np.concatenate(p))) for p in parts)
