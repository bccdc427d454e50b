"""Full-batch semi-supervised training, evaluation metrics and ablations.

One epoch = one gradient step on the masked loss over the whole graph,
followed by a validation pass. The best-validation-F1 parameters are kept
and returned; optional early stopping counts consecutive non-improving
epochs. Runs are deterministic given (seed, config, data).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DataError, NonFiniteError, TrainingDiverged
from .graph import GnnVariant
from .ingest import Dataset
from .model import ModelConfig, ModelParams, input_widths, loss, run_model
from .tensor import Tape

HISTORY_HEADER = "epoch,loss,val_acc,val_f1,val_mcc"
ABLATION_HEADER = "config,acc,f1,mcc"


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    mcc: float
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    optimizer: str = "adam"
    seed: int = 42
    patience: int | None = None  # None disables early stopping
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.lr < 0:
            raise DataError("learning rate must be nonnegative")
        if self.optimizer not in ("sgd", "adam"):
            raise DataError("optimizer must be 'sgd' or 'adam'")
        if self.patience is not None and self.patience < 0:
            raise DataError("patience must be >= 0")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val: Metrics


@dataclass
class TrainResult:
    params: ModelParams
    history: list[EpochStats]
    best_epoch: int
    best_val: Metrics


# ---------------------------------------------------------------------------
# metrics


def predictions(probs: np.ndarray) -> np.ndarray:
    """Argmax per row; ties resolve to class 0 (human)."""
    return np.argmax(probs, axis=1)


def evaluate(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> Metrics:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DataError("evaluate over an empty mask")
    y = np.asarray(labels)[mask]
    if (y < 0).any():
        raise DataError("evaluate mask covers unlabeled nodes")
    pred = predictions(np.asarray(probs)[mask])
    tp = int(((y == 1) & (pred == 1)).sum())
    tn = int(((y == 0) & (pred == 0)).sum())
    fp = int(((y == 0) & (pred == 1)).sum())
    fn = int(((y == 1) & (pred == 0)).sum())
    return confusion_metrics(tp, tn, fp, fn)


def confusion_metrics(tp: int, tn: int, fp: int, fn: int) -> Metrics:
    """Accuracy, bot-positive F1 and MCC from exact confusion counts."""
    total = tp + tn + fp + fn
    accuracy = (tp + tn) / total
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom else 0.0
    return Metrics(accuracy, f1, mcc, tp, tn, fp, fn)


def evaluate_params(dataset: Dataset, params: ModelParams, cfg: ModelConfig,
                    mask: np.ndarray) -> Metrics:
    """Inference pass (no tape) and metric computation over one mask."""
    _, probs = run_model(dataset, params, cfg)
    return evaluate(probs.data, dataset.labels, mask)


# ---------------------------------------------------------------------------
# optimizers


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, named: dict) -> None:
        for t in named.values():
            if t.grad is not None:
                t.data -= self.lr * t.grad


class _Adam:
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, lr: float):
        self.lr = lr
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, named: dict) -> None:
        self.t += 1
        for name, tensor in named.items():
            g = tensor.grad
            if g is None:
                continue
            m = self.m.setdefault(name, np.zeros_like(tensor.data))
            v = self.v.setdefault(name, np.zeros_like(tensor.data))
            m += (1 - self.beta1) * (g - m)
            v += (1 - self.beta2) * (g * g - v)
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            tensor.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    return _Adam(cfg.lr) if cfg.optimizer == "adam" else _Sgd(cfg.lr)


# ---------------------------------------------------------------------------
# training loop


def train(dataset: Dataset, cfg: TrainConfig) -> TrainResult:
    """Full-batch descent on the masked loss; returns best-val-F1 params."""
    if not dataset.masks.train.any():
        raise DataError("train split is empty")
    if not dataset.masks.val.any():
        raise DataError("val split is empty")
    params = ModelParams.init(cfg.model, input_widths(dataset.features), cfg.seed)
    opt = _make_optimizer(cfg)
    named = params.named()

    history: list[EpochStats] = []
    best_state = params.snapshot()
    best_val: Metrics | None = None
    best_epoch = 0
    bad = 0
    for epoch in range(1, cfg.epochs + 1):
        try:
            params.zero_grad()
            with Tape() as tape:
                _, probs = run_model(dataset, params, cfg.model)
                objective = loss(probs, dataset.labels, dataset.masks.train,
                                 params, cfg.model)
            train_loss = objective.item()
            if not np.isfinite(train_loss):
                raise TrainingDiverged(epoch)
            tape.backward(objective)
            opt.step(named)
            val = evaluate_params(dataset, params, cfg.model, dataset.masks.val)
        except NonFiniteError as exc:
            raise TrainingDiverged(epoch, str(exc)) from exc
        history.append(EpochStats(epoch, train_loss, val))
        improved = best_val is None or val.f1 > best_val.f1
        if improved or val.f1 == best_val.f1:
            # ties refresh the snapshot so the latest max-F1 epoch is returned
            best_val, best_epoch = val, epoch
            best_state = params.snapshot()
        if improved:
            bad = 0
        else:
            bad += 1
            if cfg.patience is not None and bad >= max(cfg.patience, 1):
                break
    params.load_state(best_state)
    assert best_val is not None
    return TrainResult(params, history, best_epoch, best_val)


# ---------------------------------------------------------------------------
# ablations


def _retrain_metrics(dataset: Dataset, cfg: TrainConfig) -> Metrics:
    result = train(dataset, cfg)
    return evaluate_params(dataset, result.params, cfg.model, dataset.masks.test)


def ablate_features(dataset: Dataset, cfg: TrainConfig,
                    subsets: Sequence[Sequence[str]]) -> list[tuple[str, Metrics]]:
    """Retrain per feature subset (same seed); test metrics per row."""
    rows = []
    for subset in subsets:
        sub_cfg = replace(cfg, model=cfg.model.with_features(tuple(subset)))
        rows.append(("+".join(sub_cfg.model.features), _retrain_metrics(dataset, sub_cfg)))
    return rows


def ablate_gnn(dataset: Dataset, cfg: TrainConfig,
               variants: Sequence[GnnVariant]) -> list[tuple[str, Metrics]]:
    rows = []
    for variant in variants:
        sub_cfg = replace(cfg, model=replace(cfg.model, variant=variant))
        rows.append((variant.value, _retrain_metrics(dataset, sub_cfg)))
    return rows


def ablate_layers(dataset: Dataset, cfg: TrainConfig,
                  layer_counts: Sequence[int]) -> list[tuple[str, Metrics]]:
    rows = []
    for count in layer_counts:
        sub_cfg = replace(cfg, model=replace(cfg.model, layers=count))
        rows.append((str(count), _retrain_metrics(dataset, sub_cfg)))
    return rows


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def history_csv(history: Sequence[EpochStats]) -> str:
    lines = [HISTORY_HEADER]
    for row in history:
        lines.append(f"{row.epoch},{_fmt(row.loss)},{_fmt(row.val.accuracy)},"
                     f"{_fmt(row.val.f1)},{_fmt(row.val.mcc)}")
    return "\n".join(lines) + "\n"


def ablation_csv(rows: Sequence[tuple[str, Metrics]]) -> str:
    lines = [ABLATION_HEADER]
    for label, m in rows:
        lines.append(f"{label},{_fmt(m.accuracy)},{_fmt(m.f1)},{_fmt(m.mcc)}")
    return "\n".join(lines) + "\n"
