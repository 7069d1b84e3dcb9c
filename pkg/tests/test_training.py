import numpy as np
import pytest

from sitscf.data import Dataset, split_dataset, synth_generate
from sitscf.losses import LossWeights
from sitscf.models import Classifier, TempCNNConfig, NoiserConfig
from sitscf.training import (AdversarialStageConfig, ClassifierStageConfig, TrainConfig, TrainingError, f1_score,
                             generate_counterfactuals, stage_rng, train_classifier, train_counterfactual)

SMALL = TrainConfig(
    classifier=ClassifierStageConfig(epochs=3, batch_size=16),
    adversarial=AdversarialStageConfig(epochs=2, batch_size=32),
    tempcnn=TempCNNConfig(channels=8, dense_width=16),
    noiser=NoiserConfig(hidden=16),
)


@pytest.fixture(scope="module")
def splits():
    return split_dataset(synth_generate(12, seed=0))


@pytest.fixture(scope="module")
def trained(splits):
    tr, va, _ = splits
    return train_classifier(tr, va, SMALL)


def test_f1_matches_sklearn():
    from sklearn.metrics import f1_score as sk_f1
    rng = np.random.default_rng(0)
    y, p = rng.integers(0, 5, 200), rng.integers(0, 5, 200)
    for avg in ("macro", "weighted"):
        assert f1_score(y, p, avg) == pytest.approx(sk_f1(y, p, average=avg), rel=1e-12)


def test_classifier_history_and_best_snapshot(trained, splits):
    model, hist = trained
    assert len(hist.epochs) == 3
    best = max(e.val_f1 for e in hist.epochs)
    assert hist.epochs[hist.best_epoch - 1].val_f1 == best
    _, va, _ = splits
    assert f1_score(va.label_index, model.predict(va.series)) == pytest.approx(best)


def test_classifier_training_is_deterministic(splits, trained):
    tr, va, _ = splits
    again, _ = train_classifier(tr, va, SMALL)
    assert again.parameter_hash() == trained[0].parameter_hash()


def test_one_class_dataset_scores_perfect_f1():
    ds = Dataset(np.arange(12), np.ones(12, int), synth_generate(12).series[:12], ("only",))
    tr, va, _ = split_dataset(ds)
    _, hist = train_classifier(tr, va, SMALL)
    assert hist.epochs[0].val_f1 == 1.0 and hist.best_epoch == 1


def test_empty_split_rejected(splits):
    tr, va, _ = splits
    with pytest.raises(TrainingError):
        train_classifier(tr.subset([]), va, SMALL)


def test_adversarial_keeps_classifier_frozen(trained, splits):
    clf, _ = trained
    tr, va, te = splits
    before = clf.parameter_hash()
    noiser, disc, hist = train_counterfactual(clf, tr, va, SMALL, probe=(va.series, va.label_index))
    assert clf.parameter_hash() == before
    assert len(hist.epochs) == 3  # probe row at epoch 0 plus two epochs
    row = hist.steps[0]
    assert set(row) == {"epoch", "step", "l_cl", "l_gen", "l_wl1", "l_dsc", "total"}
    assert row["total"] == pytest.approx(row["l_cl"] + 0.5 * row["l_gen"] + 0.05 * row["l_wl1"], rel=1e-6)


def test_zero_epoch_noiser_is_identity(trained, splits):
    clf, _ = trained
    tr, va, te = splits
    cfg = TrainConfig(classifier=SMALL.classifier, adversarial=AdversarialStageConfig(epochs=0),
                      tempcnn=SMALL.tempcnn, noiser=SMALL.noiser)
    noiser, _, _ = train_counterfactual(clf, tr, va, cfg)
    pairs = generate_counterfactuals(clf, noiser, te.series, te.ids, te.labels)
    assert all(np.all(p.delta == 0) and not p.success for p in pairs)


def test_generated_labels_reproducible(trained, splits):
    clf, _ = trained
    tr, va, te = splits
    noiser, _, _ = train_counterfactual(clf, tr, va, SMALL)
    pairs = generate_counterfactuals(clf, noiser, te.series, te.ids, te.labels)
    y_cf = clf.predict(np.stack([p.x_cf for p in pairs])) + 1
    assert [p.y_cf for p in pairs] == y_cf.tolist()
    assert all(np.array_equal(p.x_cf, p.x + p.delta) for p in pairs)


def test_config_round_trip_and_validation():
    cfg = TrainConfig()
    assert cfg.weights == LossWeights(0.5, 0.05)
    assert (cfg.classifier.epochs, cfg.adversarial.epochs) == (1000, 100)
    assert (cfg.classifier.batch_size, cfg.adversarial.batch_size) == (32, 128)
    assert cfg.classifier.lr == cfg.classifier.weight_decay == 1e-4
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"classifier": {"epochs": -1}})
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"bogus": 1})


def test_stage_rng_streams_differ():
    assert stage_rng(0, "classifier").random() != stage_rng(0, "adversarial").random()
    assert stage_rng(0, "classifier").random() == stage_rng(0, "classifier").random()
