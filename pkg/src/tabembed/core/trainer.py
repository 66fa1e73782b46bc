"""Training protocol: Adam, early stopping on validation AUC, multi-seed runs and sweeps."""

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from tabembed.core.config import RunConfig
from tabembed.core.data_loader import Dataset
from tabembed.core.diffcore import Tape, backward, bce_loss
from tabembed.core.embed_cat import CategoricalMethod, precompute_table
from tabembed.core.metrics import auc, logloss
from tabembed.core.model import EmbeddingModel, ModelConfig
from tabembed.core.optim import Adam
from tabembed.utils.constants import SPLIT_TEST, SPLIT_TRAIN, SPLIT_VAL
from tabembed.utils.errors import ConfigurationError, DataError, UndefinedMetricError

logger = logging.getLogger(__name__)

SWEEP_AXES = {"depth": "layers", "embed_dim": "d"}


@dataclass
class EpochRecord:
    seed: int
    epoch: int
    train_loss: float
    val_auc: float


@dataclass
class RunResult:
    """Outcome of one seeded training run."""

    seed: int
    epochs: List[EpochRecord]
    best_epoch: int
    best_val_auc: float
    restored_val_auc: float
    test_auc: float
    test_logloss: float
    stopped_early: bool
    wall_clock: float

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["epochs"] = [asdict(e) for e in self.epochs]
        return data


@dataclass
class TrainReport:
    """Per-run results, their aggregates and the model's parameter accounting."""

    config: Dict[str, Any]
    runs: List[RunResult]
    params: Dict[str, int]
    fields: List[Dict[str, Any]]
    cache: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    wall_clock: float = 0.0
    best_model: Optional[EmbeddingModel] = field(default=None, repr=False, compare=False)

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.runs]

    @property
    def test_aucs(self) -> np.ndarray:
        return np.array([r.test_auc for r in self.runs])

    @property
    def test_auc_mean(self) -> float:
        return float(np.mean(self.test_aucs))

    @property
    def test_auc_std(self) -> float:
        return float(np.std(self.test_aucs))

    @property
    def test_logloss_mean(self) -> float:
        return float(np.mean([r.test_logloss for r in self.runs]))

    @property
    def best_run(self) -> RunResult:
        return max(self.runs, key=lambda r: r.best_val_auc)

    def epochs_frame(self) -> pd.DataFrame:
        rows = [asdict(e) for r in self.runs for e in r.epochs]
        return pd.DataFrame(rows, columns=["seed", "epoch", "train_loss", "val_auc"])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "test_auc_mean": self.test_auc_mean,
            "test_auc_std": self.test_auc_std,
            "test_logloss_mean": self.test_logloss_mean,
            "test_logloss_std": float(np.std([r.test_logloss for r in self.runs])),
            "val_auc_mean": float(np.mean([r.best_val_auc for r in self.runs])),
            "best_seed": self.best_run.seed,
            "params": self.params,
            "fields": self.fields,
            "cache": self.cache,
            "runs": [r.to_dict() for r in self.runs],
            "wall_clock": self.wall_clock,
        }


def _splits(dataset: Dataset) -> Tuple[Dataset, Dataset, Dataset]:
    if dataset.split is None:
        raise DataError("dataset has no train/val/test split")
    parts = tuple(dataset.subset(tag) for tag in (SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST))
    for tag, part in zip((SPLIT_TRAIN, SPLIT_VAL, SPLIT_TEST), parts):
        if len(part) == 0:
            raise DataError(f"the {tag} split is empty")
    return parts


def _evaluate(model: EmbeddingModel, part: Dataset, batch: int) -> Tuple[float, np.ndarray]:
    preds = model.predict(part.numerical, part.categorical, batch_size=batch)
    try:
        return auc(preds, part.labels), preds
    except UndefinedMetricError as e:
        raise DataError(f"cannot evaluate: {e}") from None


def train_run(
    dataset: Dataset,
    model_config: ModelConfig,
    seed: int,
    lr: float,
    batch: int,
    patience: int,
    max_epochs: int,
) -> Tuple[RunResult, EmbeddingModel]:
    """
    Train one model with early stopping and restore its best-validation parameters.

    Training stops once validation AUC has failed to strictly improve for more
    than ``patience`` consecutive epochs.

    Args:
        dataset: Split and normalized dataset
        model_config: Embedding and backbone configuration
        seed: Seed for initialization and mini-batch order
        lr: Adam learning rate
        batch: Mini-batch size (a batch at least the training size is full-batch)
        patience: Epochs without improvement tolerated before stopping
        max_epochs: Upper bound on epochs

    Returns:
        Tuple of (run result, model holding the restored parameters)
    """
    train, val, test = _splits(dataset)
    start = time.perf_counter()
    model = EmbeddingModel.build(dataset.schema, model_config, seed)
    optimizer = Adam(model.parameters(), lr=lr)
    order_rng = np.random.default_rng([seed, 1])

    epochs: List[EpochRecord] = []
    best_auc, best_epoch, best_state = -np.inf, 0, model.get_state()
    without_improvement = 0
    stopped_early = False

    for epoch in range(1, max_epochs + 1):
        order = order_rng.permutation(len(train))
        total = 0.0
        for lo in range(0, len(train), batch):
            idx = order[lo : lo + batch]
            with Tape() as tape:
                probs = model.forward(train.numerical[idx], train.categorical[idx])
                loss = bce_loss(probs, train.labels[idx])
            backward(loss, tape)
            optimizer.step()
            model.mark_updated()
            total += loss.item() * len(idx)

        val_auc, _ = _evaluate(model, val, batch)
        epochs.append(EpochRecord(seed, epoch, total / len(train), val_auc))
        logger.info("seed %d epoch %d: loss %.5f val AUC %.5f", seed, epoch, total / len(train), val_auc)

        if val_auc > best_auc:
            best_auc, best_epoch, best_state = val_auc, epoch, model.get_state()
            without_improvement = 0
        else:
            without_improvement += 1
            if without_improvement > patience:
                stopped_early = True
                logger.info("seed %d: early stop at epoch %d (best %d)", seed, epoch, best_epoch)
                break

    model.load_state(best_state)
    restored_auc, _ = _evaluate(model, val, batch)
    test_auc, test_preds = _evaluate(model, test, batch)

    result = RunResult(
        seed=seed,
        epochs=epochs,
        best_epoch=best_epoch,
        best_val_auc=float(best_auc),
        restored_val_auc=restored_auc,
        test_auc=test_auc,
        test_logloss=logloss(test_preds, test.labels),
        stopped_early=stopped_early,
        wall_clock=time.perf_counter() - start,
    )
    return result, model


def _cache_report(model: EmbeddingModel, test: Dataset, batch: int) -> Dict[str, Dict[str, Any]]:
    """Serve the test split through precomputed tables of every deep categorical field."""
    deep = [e for e in model.categorical if e.method == CategoricalMethod.DEEP]
    if not deep:
        return {}
    model.caches = {e.name: precompute_table(e) for e in deep}
    cached = model.predict(test.numerical, test.categorical, batch_size=batch, use_cache=True)
    direct = model.predict(test.numerical, test.categorical, batch_size=batch)
    report = {
        name: {**cache.stats(), "max_abs_diff": float(np.max(np.abs(cached - direct)))}
        for name, cache in model.caches.items()
    }
    model.caches = {}
    return report


def train_model(dataset: Dataset, config: RunConfig) -> TrainReport:
    """
    Run the full protocol over ``config.seeds`` seeds.

    Args:
        dataset: Split and normalized dataset
        config: Run configuration

    Returns:
        Report with every run and the model of the run with the best validation AUC

    Raises:
        DataError: If a split is missing, empty or single-class
    """
    _splits(dataset)
    model_config = config.model_config(dataset.schema)
    start = time.perf_counter()

    runs: List[RunResult] = []
    best: Optional[Tuple[float, EmbeddingModel]] = None
    for seed in config.run_seeds:
        result, model = train_run(
            dataset, model_config, seed, config.lr, config.batch, config.patience, config.max_epochs
        )
        runs.append(result)
        logger.info("seed %d: test AUC %.5f", seed, result.test_auc)
        if best is None or result.best_val_auc > best[0]:
            best = (result.best_val_auc, model)

    model = best[1]
    return TrainReport(
        config=config.to_dict(),
        runs=runs,
        params=model.param_breakdown(),
        fields=model.field_rows(),
        cache=_cache_report(model, dataset.subset(SPLIT_TEST), config.batch),
        wall_clock=time.perf_counter() - start,
        best_model=model,
    )


def _dedupe(values: Iterable[int]) -> List[int]:
    values = list(values)
    unique = list(dict.fromkeys(values))
    if len(unique) != len(values):
        logger.warning("Duplicate sweep values removed: %s -> %s", values, unique)
    return unique


def sweep(dataset: Dataset, config: RunConfig, axis: str, values: Sequence[int]) -> pd.DataFrame:
    """
    Train once per value of ``axis`` (``depth`` or ``embed_dim``) with everything else fixed.

    Returns:
        One row per distinct value with mean/std test AUC and parameter totals
    """
    if axis not in SWEEP_AXES:
        raise ConfigurationError(f"unknown sweep axis '{axis}' (choose from {', '.join(SWEEP_AXES)})", "--axis")
    values = _dedupe(values)
    if not values:
        raise ConfigurationError("no sweep values given", "--values")

    rows = []
    for value in values:
        report = train_model(dataset, config.with_overrides(**{SWEEP_AXES[axis]: int(value)}))
        rows.append(
            {
                "axis": axis,
                "value": int(value),
                "auc_mean": report.test_auc_mean,
                "auc_std": report.test_auc_std,
                "logloss_mean": report.test_logloss_mean,
                "embedding_params": report.params["embedding"],
                "total_params": report.params["total"],
            }
        )
    return pd.DataFrame(rows)


def depth_sweep(dataset: Dataset, config: RunConfig, depths: Sequence[int]) -> pd.DataFrame:
    return sweep(dataset, config, "depth", depths)


def compare(dataset: Dataset, config: RunConfig, methods: Sequence[str]) -> pd.DataFrame:
    """
    Train the same data under several default methods (e.g. ``deep``, ``expand``, ``linear``).

    Each method is applied to every field whose kind supports it; explicit
    per-field assignments in ``config`` still win.
    """
    methods = list(dict.fromkeys(methods))
    if not methods:
        raise ConfigurationError("no methods to compare", "--method")

    rows = []
    for method in methods:
        run_config = config.with_overrides(default_method=method)
        assignment = run_config.resolve_methods(dataset.schema)
        report = train_model(dataset, run_config)
        rows.append(
            {
                "method": method,
                "assignment": ";".join(f"{k}={v}" for k, v in assignment.items()),
                "auc_mean": report.test_auc_mean,
                "auc_std": report.test_auc_std,
                "logloss_mean": report.test_logloss_mean,
                "embedding_params": report.params["embedding"],
                "total_params": report.params["total"],
            }
        )
    return pd.DataFrame(rows)
