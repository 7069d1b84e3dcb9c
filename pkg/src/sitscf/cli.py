"""Command-line front end.

    sitscf <command> [--config run.json] [--out DIR] [--data CSV] [--seed N] [--set key=value ...]

Commands: synth, train-classifier, train-cf, generate, evaluate, ablate, replay.
Each command writes into ``<out>/<command>/`` and leaves a ``run.json`` there
with the resolved configuration and sha256 of every input and artifact.
``--set`` takes dotted paths into the config, e.g. ``--set train.classifier.epochs=20``
(values are parsed as JSON, falling back to plain strings).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import DataError, Dataset, SplitSpec, load_csv, split_dataset, synth_generate, write_csv
from .evalsuite import (IsolationForest, ablation_run, average_perturbation, perturbation_stats,
                        plausibility_report, transition_matrix, write_average_perturbation)
from .losses import NonFiniteLossError
from .persistence import (CheckpointError, dump_json, load_checkpoint, save_checkpoint, sha256_file)
from .training import TrainConfig, TrainingError, _build, generate_counterfactuals, train_classifier, \
    train_counterfactual

log = logging.getLogger("sitscf")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRAIN = 4
EXIT_EVAL = 5
EXIT_MISMATCH = 6


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass(frozen=True)
class SynthConfig:
    n_per_class: int = 1000
    noise_sigma: float = 0.02
    length: int = 24
    seed: int = 0


@dataclass(frozen=True)
class EvalConfig:
    split: str = "test"
    contamination: float = 0.1
    n_trees: int = 100
    psi: int = 256
    seed: int = 0
    # [[src, dst], ...] with 1-based class ids; None writes every observed transition
    avg_pairs: list | None = None

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ValueError(f"evaluation.split must be train, val or test, got {self.split!r}")
        if not 0.0 <= self.contamination < 1.0:
            raise ValueError("evaluation.contamination must be in [0, 1)")
        if self.n_trees < 1 or self.psi < 2:
            raise ValueError("evaluation needs n_trees >= 1 and psi >= 2")


@dataclass(frozen=True)
class RunConfig:
    data: str | None = None
    out_dir: str = "runs/default"
    # where prerequisite checkpoints and the default dataset are read from (default: out_dir)
    inputs_dir: str | None = None
    synth: SynthConfig = SynthConfig()
    split: SplitSpec = SplitSpec()
    train: TrainConfig = TrainConfig()
    evaluation: EvalConfig = EvalConfig()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return _build(cls, d)

    @property
    def data_path(self) -> Path:
        return Path(self.data) if self.data else self.input_dir("synth") / "dataset.csv"

    def stage_dir(self, command: str) -> Path:
        return Path(self.out_dir) / command

    def input_dir(self, command: str) -> Path:
        return Path(self.inputs_dir or self.out_dir) / command


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(d: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ValueError(f"override {assignment!r} is not of the form key=value")
    key, value = assignment.split("=", 1)
    node = d
    parts = key.strip().split(".")
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ValueError(f"unknown config section {p!r} in {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ValueError(f"unknown config field {key!r}")
    node[parts[-1]] = _parse_value(value)


def resolve_config(config_path=None, overrides=(), out=None, data=None, seed=None) -> RunConfig:
    """Defaults <- config file <- explicit flags <- --set overrides, validated at the end."""
    try:
        d = RunConfig().to_dict()
        if config_path:
            with open(config_path) as f:
                loaded = json.load(f)
            d = RunConfig.from_dict(loaded).to_dict()
        if out is not None:
            d["out_dir"] = str(out)
        if data is not None:
            d["data"] = str(data)
        if seed is not None:
            for section in ("synth", "split", "train", "evaluation"):
                d[section]["seed"] = int(seed)
        for o in overrides:
            apply_override(d, o)
        return RunConfig.from_dict(d)
    except FileNotFoundError as e:
        raise CommandError(EXIT_CONFIG, f"config file not found: {e.filename}") from e
    except (ValueError, TypeError, DataError) as e:
        raise CommandError(EXIT_CONFIG, f"invalid configuration: {e}") from e


def round_sig(obj, digits: int = 6):
    """Recursively round floats to ``digits`` significant digits; NaN/Inf become None."""
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{digits}g}")
    return obj


def write_metrics(obj, path) -> None:
    dump_json(round_sig(obj), path)


class Run:
    """Collects inputs/artifacts of one command and writes its run.json."""

    def __init__(self, command: str, config: RunConfig):
        self.command = command
        self.config = config
        self.dir = config.stage_dir(command)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.inputs: dict[str, str] = {}
        self.artifacts: list[Path] = []
        self.extra: dict = {}

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def add(self, *paths) -> None:
        self.artifacts.extend(Path(p) for p in paths)

    def finish(self) -> Path:
        cfg = self.config
        record = {
            "command": self.command,
            "version": __version__,
            "config": cfg.to_dict(),
            "seeds": {
                "synth": cfg.synth.seed, "split": cfg.split.seed,
                "train": cfg.train.seed, "evaluation": cfg.evaluation.seed,
            },
            "inputs": self.inputs,
            "artifacts": {p.name: sha256_file(p) for p in self.artifacts},
            **self.extra,
        }
        path = self.dir / "run.json"
        dump_json(round_sig(record, 12), path)
        return path


def _load_splits(cfg: RunConfig, run: Run) -> tuple[Dataset, Dataset, Dataset]:
    path = cfg.data_path
    if not path.exists():
        raise CommandError(EXIT_DATA, f"dataset {path} not found; run `sitscf synth` first "
                                      f"or point --data at a CSV")
    try:
        ds = load_csv(path)
        parts = split_dataset(ds, cfg.split)
    except DataError as e:
        raise CommandError(EXIT_DATA, f"{path}: {e}") from e
    run.add_input(path)
    run.extra["split"] = {name: len(p) for name, p in zip(("train", "val", "test"), parts)}
    return parts


def _load_model(cfg: RunConfig, kind: str, producer: str, run: Run):
    stem = cfg.input_dir(producer) / kind
    manifest = stem.with_name(kind + ".manifest.json")
    if not manifest.exists():
        raise CommandError(EXIT_DATA, f"{kind} checkpoint {manifest} not found; "
                                      f"run `sitscf {producer}` first")
    try:
        model, _ = load_checkpoint(stem, kind)
    except (CheckpointError, OSError) as e:
        raise CommandError(EXIT_DATA, f"cannot load {kind} checkpoint: {e}") from e
    run.add_input(manifest)
    run.add_input(stem.with_name(kind + ".bin"))
    return model


def _split_by_name(parts, name: str) -> Dataset:
    return dict(zip(("train", "val", "test"), parts))[name]


def cmd_synth(cfg: RunConfig) -> Path:
    run = Run("synth", cfg)
    s = cfg.synth
    try:
        ds = synth_generate(s.n_per_class, seed=s.seed, noise_sigma=s.noise_sigma, length=s.length)
    except DataError as e:
        raise CommandError(EXIT_CONFIG, str(e)) from e
    path = Path(cfg.data) if cfg.data else run.dir / "dataset.csv"
    write_csv(ds, path)
    run.add(path, path.with_suffix(".json"))
    return run.finish()


def cmd_train_classifier(cfg: RunConfig) -> Path:
    run = Run("train-classifier", cfg)
    train, val, _ = _load_splits(cfg, run)
    if cfg.train.tempcnn.series_length != train.length:
        raise CommandError(EXIT_CONFIG, f"series length {train.length} does not match "
                                        f"train.tempcnn.series_length={cfg.train.tempcnn.series_length}")
    try:
        model, history = train_classifier(train, val, cfg.train)
    except (TrainingError, NonFiniteLossError) as e:
        raise CommandError(EXIT_TRAIN, str(e)) from e
    best = history.epochs[history.best_epoch - 1].val_f1 if history.best_epoch else None
    meta = {"stage": "classifier", "best_epoch": history.best_epoch, "best_val_f1": best,
            "config": cfg.train.to_dict()}
    paths = save_checkpoint(model, run.dir / "classifier", round_sig(meta, 12), cfg.train.seed)
    log_path = run.dir / "classifier_log.csv"
    history.write_csv(log_path)
    run.add(*paths, log_path)
    run.extra["best_epoch"] = history.best_epoch
    run.extra["best_val_f1"] = best
    return run.finish()


def cmd_train_cf(cfg: RunConfig) -> Path:
    run = Run("train-cf", cfg)
    train, val, _ = _load_splits(cfg, run)
    clf = _load_model(cfg, "classifier", "train-classifier", run)
    probe = (val.series[:256], val.label_index[:256])
    try:
        noiser, disc, history = train_counterfactual(clf, train, val, cfg.train, probe=probe)
    except (TrainingError, NonFiniteLossError) as e:
        raise CommandError(EXIT_TRAIN, str(e)) from e
    meta = {"stage": "counterfactual", "epochs": history.best_epoch, "config": cfg.train.to_dict(),
            "classifier_hash": clf.parameter_hash()}
    meta = round_sig(meta, 12)
    paths = save_checkpoint(noiser, run.dir / "noiser", meta, cfg.train.seed)
    paths += save_checkpoint(disc, run.dir / "discriminator", meta, cfg.train.seed)
    log_path = run.dir / "cf_log.csv"
    history.write_csv(log_path)
    epochs_path = run.dir / "cf_epochs.csv"
    with open(epochs_path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["epoch", "val_swap_rate", "probe_loss"])
        for e in history.epochs:
            w.writerow([e.epoch] + ["" if v is None else f"{v:.6g}" for v in (e.val_swap_rate, e.probe_loss)])
    run.add(*paths, log_path, epochs_path)
    return run.finish()


def _pairs(cfg: RunConfig, run: Run):
    parts = _load_splits(cfg, run)
    clf = _load_model(cfg, "classifier", "train-classifier", run)
    noiser = _load_model(cfg, "noiser", "train-cf", run)
    ds = _split_by_name(parts, cfg.evaluation.split)
    return parts, ds, generate_counterfactuals(clf, noiser, ds.series, ds.ids, ds.labels)


def cmd_generate(cfg: RunConfig) -> Path:
    run = Run("generate", cfg)
    _, ds, pairs = _pairs(cfg, run)
    path = run.dir / "counterfactuals.csv"
    length = ds.length
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "y_src", "y_cf", "t_tilde"] + [f"delta_t{i}" for i in range(length)]
                   + [f"xcf_t{i}" for i in range(length)])
        for p in pairs:
            w.writerow([p.sample_id, p.y_src, p.y_cf, p.t_tilde] + [f"{v:.6g}" for v in p.delta]
                       + [f"{v:.6g}" for v in p.x_cf])
    run.add(path)
    run.extra["evaluated_split"] = cfg.evaluation.split
    return run.finish()


def cmd_evaluate(cfg: RunConfig) -> Path:
    run = Run("evaluate", cfg)
    parts, ds, pairs = _pairs(cfg, run)
    ev = cfg.evaluation
    split = ev.split
    try:
        tm = transition_matrix(pairs, ds.n_classes, ds.class_names)
        stats = perturbation_stats(pairs)
        forest = IsolationForest(ev.n_trees, ev.psi, ev.contamination, ev.seed).fit(parts[0].series)
        plaus = plausibility_report(forest, ds.series, np.stack([p.x_cf for p in pairs]), ev.contamination)
    except ValueError as e:
        raise CommandError(EXIT_EVAL, f"evaluation failed: {e}") from e

    d = run.dir
    tm.write_csv(d / "transitions.csv", split)
    write_metrics({"split": split, **tm.chord_data()}, d / "chord.json")
    write_metrics({"split": split, **stats.to_dict()}, d / "perturbation_stats.json")
    write_metrics({"split": split, "n_trees": ev.n_trees, "psi": ev.psi, **plaus.to_dict()},
                  d / "plausibility.json")
    run.add(d / "transitions.csv", d / "chord.json", d / "perturbation_stats.json", d / "plausibility.json")

    if ev.avg_pairs is None:
        wanted = [(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(tm.counts)) if i != j]
    else:
        wanted = [(int(a), int(b)) for a, b in ev.avg_pairs]
    skipped = []
    for src, dst in wanted:
        avg = average_perturbation(pairs, src, dst)
        if not avg.has_support:
            skipped.append([src, dst])
            continue
        path = d / f"avg_perturbation_{src}_{dst}.csv"
        write_average_perturbation(avg, path, split)
        run.add(path)
    run.extra["evaluated_split"] = split
    run.extra["avg_pairs_without_support"] = skipped
    return run.finish()


def cmd_ablate(cfg: RunConfig) -> Path:
    run = Run("ablate", cfg)
    train, val, test = _load_splits(cfg, run)
    clf = _load_model(cfg, "classifier", "train-classifier", run)
    ev = cfg.evaluation
    forest = IsolationForest(ev.n_trees, ev.psi, ev.contamination, ev.seed).fit(train.series)
    try:
        report = ablation_run(train, val, test, cfg.train, classifier=clf, forest=forest,
                              contamination=ev.contamination)
    except (TrainingError, NonFiniteLossError) as e:
        raise CommandError(EXIT_TRAIN, str(e)) from e
    path = run.dir / "ablation.json"
    write_metrics(report.to_dict(), path)
    run.add(path)
    return run.finish()


HELP = {
    "synth": "write the synthetic NDVI dataset",
    "train-classifier": "train the TempCNN classifier (best validation F1 kept)",
    "train-cf": "train noiser and discriminator against the frozen classifier",
    "generate": "write counterfactuals for the evaluation split",
    "evaluate": "transitions, perturbation stats, plausibility, average perturbations",
    "ablate": "retrain the noiser without L_gen and without L_wl1 and compare",
}

COMMANDS = {
    "synth": cmd_synth,
    "train-classifier": cmd_train_classifier,
    "train-cf": cmd_train_cf,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
}


def cmd_replay(run_json, out=None) -> tuple[Path, dict[str, bool]]:
    """Re-run the command recorded in ``run_json`` and compare artifact hashes."""
    try:
        record = json.loads(Path(run_json).read_text())
        command = record["command"]
        cfg = RunConfig.from_dict(record["config"])
    except (OSError, KeyError, ValueError, TypeError) as e:
        raise CommandError(EXIT_CONFIG, f"cannot replay {run_json}: {e}") from e
    if command not in COMMANDS:
        raise CommandError(EXIT_CONFIG, f"{run_json}: unknown command {command!r}")
    if out is not None:
        # read prerequisites from the original run, write the replay elsewhere
        cfg = replace(cfg, out_dir=str(out), inputs_dir=cfg.inputs_dir or cfg.out_dir)
    new_run = COMMANDS[command](cfg)
    new_hashes = json.loads(new_run.read_text())["artifacts"]
    same = {name: new_hashes.get(name) == h for name, h in record["artifacts"].items()}
    return new_run, same


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sitscf", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output root (overrides out_dir)")
        p.add_argument("--data", help="dataset CSV (default <out>/synth/dataset.csv)")
        p.add_argument("--seed", type=int, help="set every seed in the config")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override one config field, e.g. train.classifier.epochs=20")
    p = sub.add_parser("replay", help="re-run a recorded command and compare artifact hashes")
    p.add_argument("run_json")
    p.add_argument("--out", help="write the replay under this root instead of the original one")
    p = sub.add_parser("show-config", help="print the resolved configuration")
    p.add_argument("--config")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            path, same = cmd_replay(args.run_json, args.out)
            for name, ok in sorted(same.items()):
                print(f"{'same' if ok else 'DIFFERENT'}  {name}")
            print(path)
            return EXIT_OK if all(same.values()) else EXIT_MISMATCH
        if args.command == "show-config":
            cfg = resolve_config(args.config, args.overrides)
            print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
            return EXIT_OK
        cfg = resolve_config(args.config, args.overrides, args.out, args.data, args.seed)
        path = COMMANDS[args.command](cfg)
        print(path)
        return EXIT_OK
    except CommandError as e:
        print(f"sitscf {args.command}: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
