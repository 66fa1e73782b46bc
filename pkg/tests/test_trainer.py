"""Tests for the training protocol, sweeps and method comparisons."""

import logging

import numpy as np
import pytest

from tabembed.core import trainer
from tabembed.core.config import RunConfig
from tabembed.core.data_loader import Dataset, FeatureSchema, FieldSpec, normalize, split
from tabembed.core.diffcore import Tape, backward, bce_loss
from tabembed.core.metrics import auc
from tabembed.core.model import EmbeddingModel, ModelConfig
from tabembed.core.optim import Adam
from tabembed.core.synthetic import make_synthetic
from tabembed.core.trainer import compare, depth_sweep, sweep, train_model, train_run
from tabembed.utils.constants import SPLIT_TRAIN
from tabembed.utils.errors import ConfigurationError, DataError


@pytest.fixture(scope="module")
def numeric_data():
    return normalize(split(make_synthetic("numeric", 400, 0, seed=0), seed=0))


@pytest.fixture
def tiny_config():
    return RunConfig(
        synth="numeric",
        n=400,
        d=4,
        layers=1,
        width=4,
        backbone_hidden=(8,),
        lr=1e-2,
        batch=64,
        patience=1,
        max_epochs=3,
        seeds=2,
    )


@pytest.fixture
def tiny_model_config():
    return ModelConfig(d=4, layers=1, width=4, backbone_hidden=(8,))


@pytest.fixture
def scripted_val_auc(monkeypatch):
    """Replace the per-epoch validation AUC with a fixed sequence; later calls use the real metric."""

    def install(values):
        pending = list(values)

        def fake_auc(preds, labels):
            return pending.pop(0) if pending else auc(preds, labels)

        monkeypatch.setattr(trainer, "auc", fake_auc)

    return install


def separable_data(n: int = 500) -> Dataset:
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(n, 1))
    schema = FeatureSchema([FieldSpec("x", "numerical")])
    data = Dataset(schema, x, np.zeros((n, 0), dtype=np.int64), (x[:, 0] > 0.5).astype(float))
    return normalize(split(data, seed=0))


class TestTrainRun:
    """Test one seeded run with early stopping."""

    def test_separable_data(self):
        config = ModelConfig(methods={"x": "deep"}, d=4, layers=1, width=8, backbone_hidden=(8,))
        result, _ = train_run(separable_data(), config, seed=0, lr=1e-2, batch=64, patience=5, max_epochs=50)
        assert result.test_auc > 0.95
        assert len(result.epochs) <= 50

    def test_zero_patience_stops_after_first_miss(self, numeric_data, tiny_model_config, scripted_val_auc):
        scripted_val_auc([0.6, 0.7, 0.65])
        result, _ = train_run(numeric_data, tiny_model_config, 0, 1e-2, 64, patience=0, max_epochs=30)
        assert result.stopped_early
        assert len(result.epochs) == 3
        assert result.best_epoch == 2
        assert result.best_val_auc == 0.7

    def test_patience_window(self, numeric_data, tiny_model_config, scripted_val_auc):
        scripted_val_auc([0.6, 0.7, 0.65, 0.7, 0.69])
        result, _ = train_run(numeric_data, tiny_model_config, 1, 1e-2, 64, patience=2, max_epochs=30)
        assert result.stopped_early
        assert len(result.epochs) == result.best_epoch + 3 == 5

    def test_runs_to_max_epochs_while_improving(self, numeric_data, tiny_model_config, scripted_val_auc):
        scripted_val_auc([0.5, 0.6, 0.7, 0.8])
        result, _ = train_run(numeric_data, tiny_model_config, 0, 1e-2, 64, patience=0, max_epochs=4)
        assert not result.stopped_early
        assert result.best_epoch == 4

    def test_restores_best_parameters(self, numeric_data, tiny_model_config):
        result, _ = train_run(numeric_data, tiny_model_config, 0, 1e-2, 64, patience=1, max_epochs=6)
        assert abs(result.restored_val_auc - result.best_val_auc) <= 1e-12
        assert result.best_val_auc == max(e.val_auc for e in result.epochs)

    def test_same_seed_same_run(self, numeric_data, tiny_model_config):
        a, model_a = train_run(numeric_data, tiny_model_config, 4, 1e-2, 64, 1, 3)
        b, model_b = train_run(numeric_data, tiny_model_config, 4, 1e-2, 64, 1, 3)
        assert [e.train_loss for e in a.epochs] == [e.train_loss for e in b.epochs]
        assert a.test_auc == b.test_auc
        assert model_a.digest() == model_b.digest()

    def test_requires_split(self, tiny_model_config):
        data = make_synthetic("numeric", 200, 0, seed=0)
        with pytest.raises(DataError, match="split"):
            train_run(data, tiny_model_config, 0, 1e-2, 64, 1, 2)

    def test_empty_split(self, numeric_data, tiny_model_config):
        train_only = numeric_data.subset(SPLIT_TRAIN)
        with pytest.raises(DataError, match="empty"):
            train_run(train_only, tiny_model_config, 0, 1e-2, 64, 1, 2)


class TestTrainModel:
    """Test the multi-seed protocol and its report."""

    @pytest.fixture
    def report(self, numeric_data, tiny_config):
        return train_model(numeric_data, tiny_config)

    def test_one_run_per_seed(self, report):
        assert report.seeds == [0, 1]

    def test_mean_of_runs(self, report):
        assert report.test_auc_mean == pytest.approx(np.mean([r.test_auc for r in report.runs]))
        data = report.to_dict()
        assert data["test_auc_mean"] == pytest.approx(np.mean([r["test_auc"] for r in data["runs"]]))

    def test_best_model_is_best_validation_run(self, report):
        assert report.to_dict()["best_seed"] == report.best_run.seed
        assert report.best_model is not None
        assert report.params["total"] == report.best_model.allocated()

    def test_epochs_frame(self, report):
        frame = report.epochs_frame()
        assert list(frame.columns) == ["seed", "epoch", "train_loss", "val_auc"]
        assert len(frame) == sum(len(r.epochs) for r in report.runs)

    def test_config_excludes_output_dir(self, report):
        assert "out" not in report.to_dict()["config"]

    def test_cache_report_for_deep_fields(self):
        data = normalize(split(make_synthetic("categorical", 400, 20, seed=1), seed=0))
        config = RunConfig(
            synth="categorical", n=400, v=20, d=8, d_hat=2, backbone_hidden=(4,),
            batch=64, max_epochs=2, seeds=1,
        )
        report = train_model(data, config)
        stats = report.cache["entity"]
        assert stats["misses"] == 0
        assert stats["hits"] == data.split_sizes()["test"]
        assert stats["max_abs_diff"] <= 1e-12

    def test_no_cache_without_deep_fields(self, numeric_data, tiny_config):
        report = train_model(numeric_data, tiny_config.with_overrides(seeds=1, max_epochs=1))
        assert report.cache == {}


class TestSweep:
    """Test single-axis sweeps."""

    def test_depth_rows(self, numeric_data, tiny_config):
        table = depth_sweep(numeric_data, tiny_config.with_overrides(seeds=1, max_epochs=2), [1, 2])
        assert list(table["value"]) == [1, 2]
        assert (table["axis"] == "depth").all()
        assert table["total_params"].iloc[1] > table["total_params"].iloc[0]

    def test_duplicates_removed(self, numeric_data, tiny_config, caplog):
        config = tiny_config.with_overrides(seeds=1, max_epochs=1)
        with caplog.at_level(logging.WARNING):
            table = sweep(numeric_data, config, "embed_dim", [4, 4, 6])
        assert list(table["value"]) == [4, 6]
        assert "Duplicate sweep values" in caplog.text

    def test_unknown_axis(self, numeric_data, tiny_config):
        with pytest.raises(ConfigurationError, match="--axis"):
            sweep(numeric_data, tiny_config, "width", [4])

    def test_no_values(self, numeric_data, tiny_config):
        with pytest.raises(ConfigurationError, match="--values"):
            sweep(numeric_data, tiny_config, "depth", [])


class TestCompare:
    """Test method comparisons on one dataset."""

    def test_rows_per_method(self, numeric_data, tiny_config):
        table = compare(numeric_data, tiny_config.with_overrides(seeds=1, max_epochs=1), ["deep", "linear"])
        assert list(table["method"]) == ["deep", "linear"]
        assert table["assignment"].iloc[1] == "x1=linear;x2=linear"
        assert table["embedding_params"].iloc[0] > table["embedding_params"].iloc[1]

    def test_method_for_no_field(self, numeric_data, tiny_config):
        with pytest.raises(ConfigurationError, match="--method"):
            compare(numeric_data, tiny_config, ["lookup"])


def full_batch_losses(dataset: Dataset, config: ModelConfig, seed: int, steps: int = 10):
    """Training loss before and after each of ``steps`` full-batch Adam updates."""
    train = dataset.subset(SPLIT_TRAIN)
    model = EmbeddingModel.build(dataset.schema, config, seed)
    optimizer = Adam(model.parameters(), lr=1e-3)
    losses = []
    for _ in range(steps + 1):
        with Tape() as tape:
            loss = bce_loss(model.forward(train.numerical, train.categorical), train.labels)
        losses.append(loss.item())
        backward(loss, tape)
        optimizer.step()
    return np.array(losses)


class TestOptimizationSmoke:
    """Test that the first full-batch steps reduce the training loss."""

    @pytest.mark.parametrize(
        "task, config",
        [
            ("numeric", ModelConfig(d=8, layers=1, width=16, backbone_hidden=(16,))),
            ("categorical", ModelConfig(d=8, d_hat=2, backbone_hidden=(16,))),
        ],
    )
    def test_loss_non_increasing_for_most_seeds(self, task, config):
        data = normalize(split(make_synthetic(task, 400, 20, seed=0), seed=0))
        monotone = [np.all(np.diff(full_batch_losses(data, config, seed)) <= 1e-12) for seed in range(3)]
        assert sum(monotone) >= 2


class TestEffectiveness:
    """Test the AUC ordering of embedding methods at full protocol scale."""

    @pytest.mark.slow
    def test_deep_numeric_beats_linear(self):
        data = normalize(split(make_synthetic("numeric", 10_000, 0, seed=0), seed=0))
        config = RunConfig(synth="numeric", n=10_000, d=8, seeds=5)
        table = compare(data, config, ["deep", "linear"]).set_index("method")
        assert table.loc["deep", "auc_mean"] >= table.loc["linear", "auc_mean"] + 0.01

    @pytest.mark.slow
    def test_deep_categorical_compresses_lookup(self):
        data = normalize(split(make_synthetic("categorical", 100_000, 2000, seed=0), seed=0))
        config = RunConfig(synth="categorical", n=100_000, v=2000, d=16, d_hat=2, seeds=5)
        table = compare(data, config, ["deep", "lookup"]).set_index("method")
        assert table.loc["lookup", "embedding_params"] == 2000 * 16
        assert table.loc["deep", "embedding_params"] <= 0.25 * table.loc["lookup", "embedding_params"]
        assert table.loc["deep", "auc_mean"] >= table.loc["lookup", "auc_mean"] - 0.005
