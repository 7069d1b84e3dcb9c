"""Loss-term ablation: retrain the noiser with one regularizer switched off."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from ..data import Dataset
from ..losses import LossWeights
from ..models import Classifier, Discriminator, Noiser
from ..training import History, TrainConfig, generate_counterfactuals, train_classifier, train_counterfactual
from .iforest import IsolationForest
from .metrics import PerturbationStats, PlausibilityReport, perturbation_stats, plausibility_report

log = logging.getLogger(__name__)


def ablation_variants(weights: LossWeights) -> dict[str, LossWeights]:
    return {
        "proposed": weights,
        "no_gen": replace(weights, lambda_gen=0.0),
        "no_wl1": replace(weights, lambda_wl1=0.0),
    }


@dataclass
class VariantResult:
    name: str
    weights: LossWeights
    stats: PerturbationStats
    plausibility: PlausibilityReport | None
    noiser: Noiser | None = None
    discriminator: Discriminator | None = None
    history: History | None = None

    def to_dict(self) -> dict:
        return {
            "weights": {"lambda_gen": self.weights.lambda_gen, "lambda_wl1": self.weights.lambda_wl1},
            "stats": self.stats.to_dict(),
            "plausibility": None if self.plausibility is None else self.plausibility.to_dict(),
        }


@dataclass
class AblationReport:
    split: str
    classifier_hash: str
    variants: dict[str, VariantResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "classifier_hash": self.classifier_hash,
            "variants": {k: v.to_dict() for k, v in self.variants.items()},
        }


def ablation_run(train: Dataset, val: Dataset, test: Dataset, config: TrainConfig = TrainConfig(),
                 classifier: Classifier | None = None, forest: IsolationForest | None = None,
                 contamination: float = 0.1, variants: dict[str, LossWeights] | None = None,
                 keep_models: bool = False) -> AblationReport:
    """Train one noiser per loss-weight variant against a shared frozen classifier.

    Every variant starts from the same seed, so they differ only in the loss
    weights. Statistics are computed on ``test``; the isolation forest (fitted
    on ``train`` when not given) scores the real and counterfactual test series.
    """
    if classifier is None:
        classifier, _ = train_classifier(train, val, config)
    if forest is None and contamination is not None:
        forest = IsolationForest(contamination=contamination, seed=config.seed).fit(train.series)
    variants = variants or ablation_variants(config.weights)
    report = AblationReport(split="test", classifier_hash=classifier.parameter_hash())
    for name, weights in variants.items():
        log.info("ablation variant %s: %s", name, weights)
        noiser, disc, hist = train_counterfactual(classifier, train, val, replace(config, weights=weights))
        pairs = generate_counterfactuals(classifier, noiser, test.series, test.ids, test.labels)
        stats = perturbation_stats(pairs)
        plaus = None
        if forest is not None:
            plaus = plausibility_report(forest, test.series, np.stack([p.x_cf for p in pairs]),
                                        contamination)
        report.variants[name] = VariantResult(
            name, weights, stats, plaus,
            noiser if keep_models else None, disc if keep_models else None,
            hist if keep_models else None)
    if classifier.parameter_hash() != report.classifier_hash:
        raise AssertionError("classifier changed during the ablation")
    return report
