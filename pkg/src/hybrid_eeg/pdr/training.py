"""Training loop, grouped splits, ensembles and PDR accuracy metrics."""
from __future__ import annotations

import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .features import LabeledExample
from .model import Architecture, PdrModel, denormalize_label, normalize_label
from .nn import Adam

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    batch_size: int = 16
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seed: int = 0
    architecture: Architecture = Architecture()
    dtype: str = "float32"

    def as_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size, "lr": self.lr,
                "beta1": self.beta1, "beta2": self.beta2, "seed": self.seed,
                "architecture": self.architecture.as_dict(), "dtype": self.dtype,
                "loss": "mse", "optimizer": "adam"}


@dataclass
class TrainResult:
    model: PdrModel
    history: list[float]
    val_mae: list[float] = field(default_factory=list)
    best_epoch: int | None = None
    seconds: float = 0.0


def _stack(examples: list[LabeledExample]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([ex.features.values for ex in examples])
    y = normalize_label(np.array([ex.label_hz for ex in examples]))
    return x, np.atleast_1d(y)


def train(dataset: list[LabeledExample], config: TrainConfig = TrainConfig(),
          validation: list[LabeledExample] | None = None) -> TrainResult:
    """Fit a fresh CNN with MSE on normalised labels.

    Deterministic for a given seed: weight init, dropout masks and the
    per-epoch shuffle all draw from seeded generators. With a validation set
    the weights from the epoch with the lowest validation MAE are kept.
    """
    if not dataset:
        raise TrainingError("training set is empty")
    x, y = _stack(dataset)
    model = PdrModel.build(config.architecture, config.seed, np.dtype(config.dtype))
    x = x.astype(model.dtype)
    y = y.astype(model.dtype)
    opt = Adam(model.layers, config.lr, config.beta1, config.beta2)
    shuffle = np.random.default_rng([config.seed, 2])
    history, val_hist = [], []
    best = (np.inf, None, None)
    t0 = time.perf_counter()
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(x))
        total = 0.0
        for bi, start in enumerate(range(0, len(x), config.batch_size)):
            idx = order[start:start + config.batch_size]
            model.zero_grad()
            pred = model.forward(x[idx], training=True)
            err = pred - y[idx]
            loss = float(np.mean(err.astype(np.float64) ** 2))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss {loss} at epoch {epoch}, batch {bi}")
            model.backward(2.0 * err / len(idx))
            opt.step()
            total += loss * len(idx)
        history.append(total / len(x))
        if validation:
            mae = pdr_metrics(predict_many(model, validation), [e.label_hz for e in validation])["MAE"]
            val_hist.append(mae)
            if mae < best[0]:
                best = (mae, epoch, model.copy_weights())
        logger.debug("epoch %d loss %.6f", epoch, history[-1])
    if best[2] is not None:
        model.set_weights(best[2])
    model.metadata = {"train_config": config.as_dict(), "epochs_run": config.epochs,
                      "final_loss": history[-1], "best_epoch": best[1],
                      "best_val_mae": None if best[1] is None else best[0]}
    return TrainResult(model, history, val_hist, best[1], time.perf_counter() - t0)


def predict_many(model: PdrModel, examples) -> np.ndarray:
    x = np.stack([getattr(e, "features", e).values if hasattr(getattr(e, "features", e), "values")
                  else e for e in examples])
    return model.predict_hz(x)


def ensemble_predict_many(models: list[PdrModel], examples) -> np.ndarray:
    if not models:
        raise ValueError("ensemble has no members")
    return np.mean([predict_many(m, examples) for m in models], axis=0)


def pdr_metrics(pred_hz, label_hz) -> dict[str, float]:
    """MAE, RMSE, R2 and the fractions of errors below 0.6 and 1.2 Hz."""
    p = np.asarray(pred_hz, dtype=np.float64)
    t = np.asarray(label_hz, dtype=np.float64)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise ValueError("no predictions")
    err = p - t
    ss_res = float((err ** 2).sum())
    ss_tot = float(((t - t.mean()) ** 2).sum())
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else 0.0
    return {
        "MAE": float(np.abs(err).mean()),
        "RMSE": float(np.sqrt((err ** 2).mean())),
        "R2": r2,
        "ACC06": float((np.abs(err) < 0.6).mean()),
        "ACC12": float((np.abs(err) < 1.2).mean()),
    }


def gradient_check(model: PdrModel, x: np.ndarray, y: np.ndarray, h: float = 1e-6,
                   max_per_param: int | None = None, seed: int = 0) -> dict[str, float]:
    """Worst relative error between backprop and central differences, per parameter.

    Run on a float64 model with dropout disabled; entries where both
    gradients are below 1e-8 in magnitude are skipped as numerically empty.
    """
    rng = np.random.default_rng(seed)

    def loss() -> float:
        return float(np.mean((model.forward(x) - y) ** 2))

    model.zero_grad()
    pred = model.forward(x, training=True)
    model.backward(2.0 * (pred - y) / len(y))
    worst = {}
    for name, p, g in model.parameters():
        flat, gflat = p.reshape(-1), g.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = rng.choice(flat.size, max_per_param, replace=False)
        err = 0.0
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            lp = loss()
            flat[i] = old - h
            lm = loss()
            flat[i] = old
            num = (lp - lm) / (2 * h)
            scale = abs(num) + abs(gflat[i])
            if scale > 1e-8:
                err = max(err, abs(num - gflat[i]) / scale)
        worst[name] = err
    return worst


# ------------------------------------------------------------------ splits

def _groups(dataset: list[LabeledExample]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = defaultdict(list)
    for i, ex in enumerate(dataset):
        groups[ex.group_key].append(i)
    return dict(groups)


def _stratified_group_order(dataset, groups, rng) -> list[str]:
    keys = list(groups)
    rng.shuffle(keys)
    # stable sort by mean label keeps the shuffled order within equal labels
    return sorted(keys, key=lambda k: np.mean([dataset[i].label_hz for i in groups[k]]))


def split_grouped(dataset: list[LabeledExample], train_frac: float = 0.7, seed: int = 0
                  ) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Group-aware train/test split balanced over the label range.

    Groups are ordered by label and dealt out block by block so each block of
    ten contributes seven groups to training and three to testing.
    """
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must be in (0, 1)")
    groups = _groups(dataset)
    rng = np.random.default_rng(seed)
    order = _stratified_group_order(dataset, groups, rng)
    block = 10
    n_train_block = int(round(train_frac * block))
    train_keys, test_keys = [], []
    for s in range(0, len(order), block):
        chunk = order[s:s + block]
        k = int(round(train_frac * len(chunk))) if len(chunk) < block else n_train_block
        picks = set(rng.choice(len(chunk), size=k, replace=False).tolist())
        for j, key in enumerate(chunk):
            (train_keys if j in picks else test_keys).append(key)
    train = [dataset[i] for k in train_keys for i in groups[k]]
    test = [dataset[i] for k in test_keys for i in groups[k]]
    return train, test


def kfold_grouped(dataset: list[LabeledExample], k: int = 4, seed: int = 0
                  ) -> list[list[LabeledExample]]:
    """Partition into ``k`` folds without splitting any group, stratified by label."""
    groups = _groups(dataset)
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > len(groups):
        raise ValueError(f"k={k} exceeds the number of groups ({len(groups)})")
    rng = np.random.default_rng(seed)
    order = _stratified_group_order(dataset, groups, rng)
    folds: list[list[str]] = [[] for _ in range(k)]
    for s in range(0, len(order), k):
        chunk = order[s:s + k]
        slots = rng.permutation(k)
        # give a short last chunk to the currently smallest folds
        if len(chunk) < k:
            sizes = np.array([len(f) for f in folds])
            slots = np.argsort(sizes, kind="stable")
        for key, slot in zip(chunk, slots):
            folds[slot].append(key)
    return [[dataset[i] for key in f for i in groups[key]] for f in folds]


def cross_validate(dataset: list[LabeledExample], k: int = 4, config: TrainConfig = TrainConfig()
                   ) -> list[dict]:
    """Rotate each fold as the test set; returns per-fold metrics."""
    folds = kfold_grouped(dataset, k, config.seed)
    results = []
    for i in range(k):
        test = folds[i]
        train_set = [ex for j, f in enumerate(folds) if j != i for ex in f]
        res = train(train_set, config)
        m = pdr_metrics(predict_many(res.model, test), [e.label_hz for e in test])
        m["fold"] = i
        m["n_test"] = len(test)
        results.append(m)
    return results


def train_ensemble(dataset: list[LabeledExample], seeds=(0, 1, 2), config: TrainConfig = TrainConfig(),
                   validation: list[LabeledExample] | None = None) -> list[TrainResult]:
    """Train one model per seed, each keeping its best-validation-MAE checkpoint."""
    out = []
    for s in seeds:
        cfg = TrainConfig(config.epochs, config.batch_size, config.lr, config.beta1, config.beta2,
                          s, config.architecture, config.dtype)
        out.append(train(dataset, cfg, validation))
    return out


__all__ = [
    "TrainConfig", "TrainResult", "TrainingError", "train", "predict_many",
    "ensemble_predict_many", "pdr_metrics", "split_grouped", "kfold_grouped",
    "cross_validate", "train_ensemble", "gradient_check", "denormalize_label",
]
