"""Dataset splits and mini-batch training with early stopping."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericError, UndefinedMetricError
from .evalsuite.metrics import auroc
from .milnet import PackedGraphs, backward, concat_packed, featurize_bag, forward, init_params
from .numkern import AdamState, adam_step
from .numkern.ops import ParamStore, bce_loss
from .spatialgraph import DEFAULT_FEATS, FeatConfig

REFERENCE_SIZES = (500, 200, 457)


@dataclass(frozen=True)
class SplitSpec:
    train: tuple
    validation: tuple
    test: tuple
    subset: tuple  # training indices actually used, a prefix of ``train``

    def __post_init__(self):
        parts = [set(self.train), set(self.validation), set(self.test)]
        if sum(map(len, parts)) != len(set().union(*parts)):
            raise DomainError("split parts overlap")
        if not set(self.subset) <= parts[0]:
            raise DomainError("training subset must lie inside the training split")

    def part(self, name: str) -> tuple:
        if name not in ("train", "validation", "test", "subset"):
            raise DomainError(f"unknown split part {name!r}")
        return getattr(self, name)


def split_sizes(n: int) -> tuple:
    total = sum(REFERENCE_SIZES)
    if n == total:
        return REFERENCE_SIZES
    n_train = round(n * REFERENCE_SIZES[0] / total)
    n_val = round(n * REFERENCE_SIZES[1] / total)
    return n_train, n_val, n - n_train - n_val


def split_dataset(dataset, seed: int, train_size: int | None = None) -> SplitSpec:
    """Seeded shuffle, then contiguous train / validation / test slices."""
    n = len(dataset)
    n_train, n_val, n_test = split_sizes(n)
    if min(n_train, n_val, n_test) < 1:
        raise DomainError(f"dataset of {n} bags is too small to split")
    if train_size is None:
        train_size = n_train
    if not 1 <= train_size <= n_train:
        raise DomainError(f"training subset {train_size} outside 1..{n_train}")
    perm = np.random.default_rng(seed).permutation(n)
    train = tuple(int(i) for i in perm[:n_train])
    return SplitSpec(
        train,
        tuple(int(i) for i in perm[n_train:n_train + n_val]),
        tuple(int(i) for i in perm[n_train + n_val:]),
        train[:train_size],
    )


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 1e-3
    lr_final: float | None = None  # linear decay target, e.g. 1e-4
    batch_size: int = 8
    patience: int = 20
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.epochs <= 200:
            raise DomainError("epochs must be in 1..200")
        if not 1 <= self.batch_size <= 16:
            raise DomainError("batch size must be in 1..16")
        if self.patience < 0:
            raise DomainError("patience must be non-negative")
        for lr in (self.lr, self.lr_final):
            if lr is not None and not (math.isfinite(lr) and lr > 0):
                raise DomainError(f"learning rate must be positive, got {lr}")

    def lr_at(self, epoch: int) -> float:
        if self.lr_final is None or self.epochs == 1:
            return self.lr
        frac = epoch / (self.epochs - 1)
        return self.lr + (self.lr_final - self.lr) * frac


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_auroc: float
    best: bool


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    @property
    def best_epoch(self) -> int | None:
        for r in reversed(self.rows):
            if r.best:
                return r.epoch
        return None

    @property
    def best_val_loss(self) -> float:
        return min(r.val_loss for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_auroc", "best_flag"])
        for r in self.rows:
            w.writerow([r.epoch, f"{r.train_loss:.10g}", f"{r.val_loss:.10g}",
                        f"{r.val_auroc:.10g}", int(r.best)])
        return buf.getvalue()


def featurize_all(bags, config: FeatConfig = DEFAULT_FEATS) -> list:
    return [featurize_bag(b, config) for b in bags]


def _labels(bags, idx) -> np.ndarray:
    return np.array([bags[i].bag_label for i in idx], dtype=np.float64)


def predict_probs(packed: list, params: ParamStore, idx, chunk: int = 64) -> np.ndarray:
    out = []
    idx = list(idx)
    for lo in range(0, len(idx), chunk):
        part = concat_packed([packed[i] for i in idx[lo:lo + chunk]])
        out.append(forward(part, params)[0])
    return np.concatenate(out) if out else np.empty(0)


def evaluate_loss(packed: list, params: ParamStore, labels, idx) -> tuple:
    probs = predict_probs(packed, params, idx)
    return float(np.mean(bce_loss(probs, labels))), probs


def train(dataset, split: SplitSpec, config: TrainConfig, params: ParamStore | None = None,
          packed: list | None = None, progress=None):
    """Adam over shuffled mini-batches of the training subset.

    A batch is packed into one graph and its loss is the mean over its bags,
    so the gradient is the mean of the per-bag gradients.  Returns the
    parameters of the epoch with the lowest validation loss and the log.
    """
    if not split.subset:
        raise DomainError("empty training subset")
    if not split.validation:
        raise DomainError("empty validation split")
    if packed is None:
        packed = [None] * len(dataset)
        for i in set(split.subset) | set(split.validation):
            packed[i] = featurize_bag(dataset[i])
    if params is None:
        first = packed[split.subset[0]]
        params = init_params(config.seed, first.x.shape[1], first.ef.shape[1] - 1)
    rng = np.random.default_rng(config.seed)
    state = AdamState.fresh(params, config.lr)
    val_idx = list(split.validation)
    val_labels = _labels(dataset, val_idx)
    log = TrainLog()
    best = (math.inf, {k: v.copy() for k, v in params.items()})
    wait = 0
    subset = np.asarray(split.subset)
    for epoch in range(config.epochs):
        lr = config.lr_at(epoch)
        order = subset[rng.permutation(subset.size)]
        total, seen = 0.0, 0
        for lo in range(0, order.size, config.batch_size):
            batch = order[lo:lo + config.batch_size]
            part = concat_packed([packed[i] for i in batch])
            labels = _labels(dataset, batch)
            *_, cache = forward(part, params)
            loss, grads = backward(cache, labels, params)
            if not math.isfinite(loss):
                ids = [dataset[i].id for i in batch]
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch bags {ids}")
            total += loss * batch.size
            seen += batch.size
            params, state = adam_step(params, grads, state, lr)
        val_loss, val_probs = evaluate_loss(packed, params, val_labels, val_idx)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        try:
            val_auc = auroc(val_labels, val_probs)
        except UndefinedMetricError:
            val_auc = math.nan
        improved = val_loss < best[0]
        if improved:
            best = (val_loss, {k: v.copy() for k, v in params.items()})
            wait = 0
        else:
            wait += 1
        log.rows.append(EpochRecord(epoch, total / seen, val_loss, val_auc, improved))
        if progress is not None:
            progress(log.rows[-1])
        if wait > config.patience:
            break
    return best[1], log
