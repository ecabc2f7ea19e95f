"""Shared minibatch training loop: Adam, grouped validation split, early stop."""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError
from .nn.optim import Adam
from .nn.tensor import bce_loss, mae_loss

LOSSES = {"mae": mae_loss, "bce": bce_loss}


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    epochs: int = 300
    batch_size: int = 512
    patience: int = 20
    val_fraction: float = 0.1
    loss: str = "mae"

    def __post_init__(self):
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("training config values must be positive")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}, expected one of {sorted(LOSSES)}")


def group_split(group_keys, val_fraction, rng):
    """Index split where validation holds out whole groups (no group straddles)."""
    groups = sorted(set(group_keys))
    if len(groups) < 2 or val_fraction <= 0.0:
        return np.arange(len(group_keys)), np.zeros(0, dtype=np.intp)
    shuffled = list(groups)
    rng.shuffle(shuffled)
    n_val = max(1, int(round(val_fraction * len(groups))))
    val_groups = set(shuffled[:n_val])
    keys = list(group_keys)
    train_idx = np.array([i for i, k in enumerate(keys) if k not in val_groups], dtype=np.intp)
    val_idx = np.array([i for i, k in enumerate(keys) if k in val_groups], dtype=np.intp)
    return train_idx, val_idx


def fit(labels, group_keys, forward_fn, trainable, cfg, seed):
    """Minimize cfg.loss of forward_fn against labels; returns the per-epoch log.

    forward_fn(indices, training, rng) must return a (len(indices), 1) tensor
    of predictions. ``trainable`` is the name -> Tensor dict Adam updates;
    parameters end at the epoch with the best validation MAE (train MAE when
    the split leaves no validation groups). The logged metrics stay MAE for
    comparability regardless of the descent loss.
    """
    labels = np.asarray(labels, dtype=np.float64)
    n = labels.size
    if n == 0:
        raise EmptyDatasetError("no training examples")
    loss_fn = LOSSES[cfg.loss]
    rng = np.random.default_rng([seed, 0])
    split_rng = np.random.default_rng([seed, 1])
    train_idx, val_idx = group_split(group_keys, cfg.val_fraction, split_rng)
    opt = Adam(trainable, lr=cfg.lr)
    log = []
    best_metric = np.inf
    best_state = None
    stale = 0
    for epoch in range(cfg.epochs):
        order = train_idx.copy()
        rng.shuffle(order)
        abs_err = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            pred = forward_fn(batch, True, rng)
            loss = loss_fn(pred, labels[batch])
            opt.zero_grad()
            loss.backward()
            opt.step()
            abs_err += float(np.sum(np.abs(pred.data.ravel() - labels[batch])))
        train_mae = abs_err / order.size
        if val_idx.size:
            val_pred = forward_fn(val_idx, False, None)
            val_mae = float(np.mean(np.abs(val_pred.data.ravel() - labels[val_idx])))
            metric = val_mae
        else:
            val_mae = None
            metric = train_mae
        log.append({"epoch": epoch, "train_mae": train_mae, "val_mae": val_mae})
        if metric < best_metric - 1e-12:
            best_metric = metric
            best_state = {k: t.data.copy() for k, t in trainable.items()}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    if best_state is not None:
        for k, t in trainable.items():
            t.data = best_state[k]
    return log
