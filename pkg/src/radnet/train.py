"""Minibatch training with plateau LR scheduling, early stopping, NRMSE
tracking, and warm-start fine-tuning for transfer learning.

The stochastic element is seeded minibatch gradient descent (with
optional momentum); one run is fully deterministic in its config seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .datapipe import Dataset, fit_normalization
from .net import MlpModel, MlpWeights, NormStats, backward_batch, forward_batch, init_kaiming


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    batch: int = 256
    max_epochs: int = 1500
    plateau_patience: int = 5
    plateau_factor: float = 0.5
    lr_min: float = 1e-7
    early_stop_patience: int = 20
    optimizer: str = "adam"  # "adam" or "sgd" (momentum SGD)
    momentum: float = 0.9
    hidden: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.lr0 > self.lr_min > 0:
            raise ValueError("need lr0 > lr_min > 0")
        if self.plateau_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_nrmse: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    stop_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "val_nrmse", "lr"])
            for e in range(self.epochs):
                w.writerow([e, self.train_loss[e], self.val_loss[e],
                            self.val_nrmse[e], self.lr[e]])


def nrmse(pred: np.ndarray, target: np.ndarray, targ_std: np.ndarray) -> float:
    """Per-output RMSE divided by the target std, averaged over outputs."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ValueError("pred/target shape mismatch")
    if pred.size == 0:
        raise ValueError("empty batch")
    rmse = np.sqrt(np.mean((pred - target) ** 2, axis=0))
    return float(np.mean(rmse / targ_std))


class PlateauScheduler:
    """Halve the learning rate after `patience` consecutive epochs without
    validation improvement (improvement = drop below best by more than delta),
    floored at lr_min."""

    def __init__(self, lr0: float, patience: int = 5, factor: float = 0.5,
                 lr_min: float = 1e-7, delta: float = 1e-8):
        self.lr = lr0
        self.patience = patience
        self.factor = factor
        self.lr_min = lr_min
        self.delta = delta
        self.best = np.inf
        self.bad_epochs = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best - self.delta:
            self.best = val_loss
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
            if self.bad_epochs >= self.patience:
                self.lr = max(self.lr * self.factor, self.lr_min)
                self.bad_epochs = 0
        return self.lr


_PARAMS = ("W1", "B1", "W2", "B2")


class _MomentumSgd:
    def __init__(self, w: MlpWeights, momentum: float):
        self.momentum = momentum
        self.vel = {n: np.zeros_like(getattr(w, n)) for n in _PARAMS}

    def update(self, w: MlpWeights, grads: MlpWeights, lr: float):
        for n in _PARAMS:
            v = self.vel[n]
            v *= self.momentum
            v -= lr * getattr(grads, n)
            getattr(w, n)[...] += v


class _Adam:
    def __init__(self, w: MlpWeights, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {n: np.zeros_like(getattr(w, n)) for n in _PARAMS}
        self.v = {n: np.zeros_like(getattr(w, n)) for n in _PARAMS}
        self.t = 0

    def update(self, w: MlpWeights, grads: MlpWeights, lr: float):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for n in _PARAMS:
            g = getattr(grads, n)
            m, v = self.m[n], self.v[n]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            getattr(w, n)[...] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _normalized(ds: Dataset, norm: NormStats):
    X = norm.normalize_features(ds.features.astype(np.float64))
    Y = norm.normalize_targets(ds.targets.astype(np.float64))
    return X, Y


def _run_loop(weights: MlpWeights, norm: NormStats, train_ds: Dataset,
              val_ds: Dataset, cfg: TrainConfig):
    Xtr, Ytr = _normalized(train_ds, norm)
    Xva, Yva = _normalized(val_ds, norm)
    n_train = len(Xtr)

    rng = np.random.default_rng(cfg.seed)
    sched = PlateauScheduler(cfg.lr0, cfg.plateau_patience,
                             cfg.plateau_factor, cfg.lr_min)
    opt = _Adam(weights) if cfg.optimizer == "adam" else _MomentumSgd(weights, cfg.momentum)
    history = TrainHistory()
    best_val = np.inf
    best_weights = weights.copy()
    stall = 0
    lr = cfg.lr0

    for _epoch in range(cfg.max_epochs):
        perm = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, cfg.batch):
            idx = perm[start:start + cfg.batch]
            grads, loss = backward_batch(weights, Xtr[idx], Ytr[idx])
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {_epoch}, lr {lr}")
            losses.append(loss)
            opt.update(weights, grads, lr)

        val_pred = forward_batch(weights, Xva, float32=False)
        val_loss = float(np.mean((val_pred - Yva) ** 2))
        # validation targets are unit-variance by construction, so NRMSE is
        # computed against std 1 in normalized space
        val_nrmse = nrmse(val_pred, Yva, np.ones(weights.m))

        history.train_loss.append(float(np.mean(losses)))
        history.val_loss.append(val_loss)
        history.val_nrmse.append(val_nrmse)
        history.lr.append(lr)

        if val_loss < best_val:
            best_val = val_loss
            best_weights = weights.copy()
            stall = 0
        else:
            stall += 1
            if stall >= cfg.early_stop_patience:
                history.stop_reason = "early_stop"
                break
        lr = sched.step(val_loss)
    else:
        history.stop_reason = "max_epochs"

    return best_weights, history


def train(key, train_ds: Dataset, val_ds: Dataset, cfg: TrainConfig):
    """Train one sub-model from a Kaiming start; returns the best-validation
    snapshot and the full history."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ValueError("empty dataset")
    if train_ds.key != key or val_ds.key != key:
        raise ValueError("dataset key does not match requested key")
    norm = fit_normalization(train_ds)
    weights = init_kaiming(key.n_features, cfg.hidden, train_ds.targets.shape[1],
                           cfg.seed)
    if cfg.max_epochs == 0:
        model = MlpModel(key, weights, norm,
                         meta={"epochs": 0, "seed": cfg.seed})
        return model, TrainHistory(stop_reason="max_epochs")

    best, history = _run_loop(weights, norm, train_ds, val_ds, cfg)
    best_epoch = int(np.argmin(history.val_loss))
    meta = {
        "epochs": history.epochs,
        "best_epoch": best_epoch,
        "final_nrmse": history.val_nrmse[best_epoch],
        "seed": cfg.seed,
        "stop_reason": history.stop_reason,
    }
    return MlpModel(key, best, norm, meta), history


def finetune(base: MlpModel, new_train: Dataset, new_val: Dataset,
             cfg: TrainConfig):
    """Warm-start training from an existing model's weights.

    Normalization statistics are refit on the new training data; meta
    records the lineage to the base model.
    """
    if new_train.key != base.key or new_val.key != base.key:
        raise ValueError(
            f"dataset key does not match base model key {base.key.code}")
    if base.weights.n != base.key.n_features:
        raise ValueError("base model width inconsistent with its key")
    if len(new_train) == 0 or len(new_val) == 0:
        raise ValueError("empty dataset")

    norm = fit_normalization(new_train)
    weights = base.weights.copy()
    cfg = replace(cfg, hidden=weights.k)
    if cfg.max_epochs == 0:
        model = MlpModel(base.key, weights, norm,
                         meta={"epochs": 0, "seed": cfg.seed,
                               "base": base.meta.get("name", "<in-memory>")})
        return model, TrainHistory(stop_reason="max_epochs")

    best, history = _run_loop(weights, norm, new_train, new_val, cfg)
    best_epoch = int(np.argmin(history.val_loss))
    meta = {
        "epochs": history.epochs,
        "best_epoch": best_epoch,
        "final_nrmse": history.val_nrmse[best_epoch],
        "seed": cfg.seed,
        "stop_reason": history.stop_reason,
        "base": base.meta.get("name", "<in-memory>"),
        "base_meta": {k: v for k, v in base.meta.items() if k != "base_meta"},
    }
    return MlpModel(base.key, best, norm, meta), history
