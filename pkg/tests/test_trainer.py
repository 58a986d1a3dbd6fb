import json

import numpy as np
import pytest

from xmodal.errors import DataError, ShapeError
from xmodal.losses import LossWeights
from xmodal.model import init_params, params_equal, save_params
from xmodal.optim import OptimConfig
from xmodal.synth import make_synthetic_set
from xmodal.trainer import TrainConfig, evaluate_split, planned_batches, train

from oracles import clip_loss_oracle, logistic_regression_accuracy


def synthetic_splits(seed=7, n=250, dim=16, **kwargs):
    corpus = make_synthetic_set(n=n, dim=dim, seed=seed, **kwargs)
    return corpus.subset(range(n - 50)), corpus.subset(range(n - 50, n))


def fast_config(**overrides):
    base = dict(
        epochs=5,
        batch_size=16,
        weights=LossWeights(),
        dropout_p=0.1,
        seed=3,
        optimizer=OptimConfig(lr_backbone=1e-2, lr_head=1e-2, weight_decay=0.0),
    )
    base.update(overrides)
    return TrainConfig(**base)


class TestPlannedBatches:
    def test_short_remainder_dropped(self):
        assert planned_batches(129, 128) == 1

    def test_pair_remainder_kept(self):
        assert planned_batches(130, 128) == 2

    def test_exact_multiple(self):
        assert planned_batches(256, 128) == 2


class TestTrain:
    def test_classification_only_separable_clusters(self):
        # A plain logistic-regression oracle certifies the corpus is
        # separable before asking the trainer to match it.
        data, val = synthetic_splits(seed=7, class_sep=6.0, modality_noise=0.5)
        fused_train = (data.images + data.texts) / 2
        fused_val = (val.images + val.texts) / 2
        oracle_acc = logistic_regression_accuracy(fused_train, data.labels, fused_val, val.labels)
        assert oracle_acc >= 0.99

        cfg = TrainConfig(
            epochs=20,
            batch_size=128,
            weights=LossWeights(lambda1=1.0, lambda2=0.0, lambda3=0.0, tau=0.07),
            dropout_p=0.1,
            seed=3,
            optimizer=OptimConfig(lr_backbone=5e-3, lr_head=5e-2, weight_decay=0.0),
        )
        _, logs = train(data, val, cfg)
        assert logs[-1].val_accuracy >= 0.95

    def test_clip_only_matches_oracle_at_init_and_trends_down(self):
        data, val = synthetic_splits(seed=9, modality_noise=0.0)  # image_i == text_i
        weights = LossWeights(lambda1=0.0, lambda2=0.0, lambda3=1.0, tau=0.07)
        report = evaluate_split(init_params(data.dim, seed=0), data, weights)
        expected = clip_loss_oracle(data.images, data.texts, 0.07)
        assert report.loss.clip == pytest.approx(expected, abs=1e-9)

        cfg = fast_config(weights=weights, epochs=5, optimizer=OptimConfig(5e-3, 5e-3, weight_decay=0.0))
        _, logs = train(data, val, cfg)
        assert logs[4].train_loss.clip <= logs[0].train_loss.clip

    def test_zero_epochs_returns_init(self):
        data, val = synthetic_splits()
        params, logs = train(data, val, fast_config(epochs=0))
        assert logs == []
        assert params_equal(params, init_params(data.dim, seed=3))

    def test_deterministic_logs_and_checkpoints(self, tmp_path):
        data, val = synthetic_splits(seed=13, n=120)
        runs = []
        for name in ("a", "b"):
            cfg = fast_config(epochs=3, log_path=str(tmp_path / f"{name}.jsonl"))
            params, logs = train(data, val, cfg)
            save_params(params, tmp_path / f"{name}.cmxm")
            runs.append(logs)
        assert [e.to_dict() for e in runs[0]] == [e.to_dict() for e in runs[1]]
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
        assert (tmp_path / "a.cmxm").read_bytes() == (tmp_path / "b.cmxm").read_bytes()

    def test_log_file_matches_returned_logs(self, tmp_path):
        data, val = synthetic_splits(seed=17, n=100)
        path = tmp_path / "epochs.jsonl"
        _, logs = train(data, val, fast_config(epochs=2, log_path=str(path)))
        lines = [json.loads(line) for line in path.read_text().splitlines()]
        assert lines == [e.to_dict() for e in logs]

    def test_loss_decomposition_identity(self):
        data, val = synthetic_splits(seed=19, n=100)
        weights = LossWeights(lambda1=0.7, lambda2=1.1, lambda3=0.3, tau=0.07)
        _, logs = train(data, val, fast_config(epochs=3, weights=weights))
        for entry in logs:
            for breakdown in (entry.train_loss, entry.val_loss):
                recomposed = (
                    weights.lambda1 * breakdown.binary
                    + weights.lambda2 * breakdown.supcon
                    + weights.lambda3 * breakdown.clip
                )
                assert breakdown.total == pytest.approx(recomposed, abs=1e-12)

    def test_single_class_warns_but_runs(self, caplog):
        corpus = make_synthetic_set(n=60, dim=8, seed=21, normal_frac=1.0)
        data, val = corpus.subset(range(40)), corpus.subset(range(40, 60))
        with caplog.at_level("WARNING"):
            _, logs = train(data, val, fast_config(epochs=1))
        assert any("single class" in rec.message for rec in caplog.records)
        assert len(logs) == 1

    def test_dim_mismatch(self):
        data, _ = synthetic_splits(n=60, dim=8)
        _, val = synthetic_splits(n=60, dim=4)
        with pytest.raises(ShapeError):
            train(data, val, fast_config())

    def test_empty_dataset(self):
        data, val = synthetic_splits(n=60, dim=4)
        with pytest.raises(DataError):
            train(data.subset([]), val, fast_config())

    def test_unlabeled_rejected(self):
        data, val = synthetic_splits(n=60, dim=4)
        data.labels[0] = 255
        with pytest.raises(DataError):
            train(data, val, fast_config())


class TestEvaluateSplit:
    def test_zero_head_predicts_normal(self):
        data, _ = synthetic_splits(n=60, dim=6)
        params = init_params(6, seed=0)
        params.head_weight = np.zeros(6)
        report = evaluate_split(params, data, LossWeights())
        assert report.accuracy == pytest.approx(float(np.mean(data.labels == 0)))

    def test_identical_modalities_top1_is_one(self):
        data, _ = synthetic_splits(n=60, dim=6, modality_noise=0.0)
        report = evaluate_split(init_params(6, seed=1), data, LossWeights())
        assert report.top1_i2t == 1.0
        assert report.top1_t2i == 1.0

    def test_single_record_split(self):
        data, _ = synthetic_splits(n=60, dim=6)
        single = data.subset([0])
        report = evaluate_split(init_params(6, seed=1), single, LossWeights())
        assert report.top1_i2t == 1.0
        assert report.top1_t2i == 1.0
        assert report.loss.supcon == 0.0
