"""Training loop: SGD with classical momentum, distance loss, plateau decay
of the learning rate and early stopping with best-weight restoration.

The plateau/stop monitor is an internal holdout carved off the training set
(never the evaluation set). Everything is seeded, so a run is bit-for-bit
reproducible in double precision; wall-clock seconds are the one recorded
quantity that is not.
"""

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDivergedError

MDE_EPS = 1e-12          # keeps the loss gradient finite at zero error
MIN_IMPROVEMENT = 1e-6   # meters; smaller deltas do not reset patience


def mde_loss(pred, truth):
    """Mean Euclidean distance between predictions and truth, with gradient.

    loss = mean_i sqrt(sum_d (pred - truth)^2 + eps)
    dloss/dpred_i = (pred_i - truth_i) / (B * sqrt(.))
    """
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2:
        raise ShapeError(f"mde_loss shapes must match (B, D), got {pred.shape} vs {truth.shape}")
    diff = pred - truth
    dist = np.sqrt((diff * diff).sum(axis=1) + MDE_EPS)
    grad = diff / (dist[:, None] * pred.shape[0])
    return float(dist.mean()), grad


def sgd_momentum_step(params, lr, momentum):
    """Classical momentum update: v <- momentum*v - lr*g; w <- w + v."""
    for p in params:
        if not np.isfinite(p.grad).all():
            raise TrainingDivergedError("non-finite gradient in optimizer step")
        p.vel *= momentum
        p.vel -= lr * p.grad
        p.value += p.vel


class PlateauSchedule:
    """Patience state machine over a monitored loss.

    An epoch "improves" when the monitor drops more than MIN_IMPROVEMENT
    below the best seen. lr_patience bad epochs multiply the rate by
    lr_factor (and reset the decay counter); stop_patience bad epochs in a
    row request a stop. The stop counter only resets on improvement.
    """

    def __init__(self, lr0, lr_factor, lr_patience, stop_patience):
        self.lr = lr0
        self.lr_factor = lr_factor
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.best = np.inf
        self.bad_for_lr = 0
        self.bad_for_stop = 0

    def update(self, monitor):
        """Feed one epoch's monitor value; returns (improved, should_stop)."""
        if monitor < self.best - MIN_IMPROVEMENT:
            self.best = monitor
            self.bad_for_lr = 0
            self.bad_for_stop = 0
            return True, False
        self.bad_for_lr += 1
        self.bad_for_stop += 1
        if self.bad_for_stop >= self.stop_patience:
            return False, True
        if self.bad_for_lr >= self.lr_patience:
            self.lr *= self.lr_factor
            self.bad_for_lr = 0
        return False, False


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 250
    batch_size: int = 32
    lr0: float = 1e-3
    momentum: float = 0.9
    lr_patience: int = 10
    lr_factor: float = 0.1
    stop_patience: int = 21
    monitor_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.max_epochs < 0 or self.batch_size < 1 or self.lr_patience < 1:
            raise ValueError("epoch/batch/patience counts must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must be in (0, 1)")
        if self.stop_patience <= self.lr_patience:
            raise ValueError("stop_patience must exceed lr_patience")
        if not 0.0 < self.monitor_fraction < 1.0:
            raise ValueError("monitor_fraction must be in (0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    train_mde: float
    monitor_mde: float
    lr: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    stop_reason: str = "max_epochs"

    def to_csv(self, path):
        with open(path, "w", newline="\n") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["epoch", "train_mde", "monitor_mde", "lr", "seconds"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.train_mde), repr(r.monitor_mde),
                                 repr(r.lr), repr(r.seconds)])


def _batched_mde(net, x, y, batch=256):
    total = 0.0
    for start in range(0, len(x), batch):
        pred = net.forward(x[start:start + batch])
        diff = pred - y[start:start + batch]
        total += np.sqrt((diff * diff).sum(axis=1)).sum()
    return float(total / len(x))


def _round_half_up(x):
    return int(np.floor(x + 0.5))


def train(net, ds, cfg: TrainConfig, monitor_fn=None, checkpoint_path=None,
          checkpoint_norm_scale=None):
    """Train in place; returns (net, TrainHistory) with best-monitor weights restored.

    monitor_fn(net, epoch) may replace the internal-holdout monitor (used by
    tests to drive the schedule). With checkpoint_path set, the weights are
    written there every time the monitor improves.
    """
    n = len(ds)
    if n <= cfg.batch_size / (1.0 - cfg.monitor_fraction):
        raise ValueError(
            f"dataset of {n} samples is too small for batch_size {cfg.batch_size} "
            f"with monitor_fraction {cfg.monitor_fraction}")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_mon = max(1, _round_half_up(n * cfg.monitor_fraction))
    mon_ids = np.sort(perm[:n_mon])
    tr_ids = np.sort(perm[n_mon:])
    x_mon, y_mon = ds.csi[mon_ids], ds.pos[mon_ids]
    x_tr, y_tr = ds.csi[tr_ids], ds.pos[tr_ids]

    params = net.params()
    sched = PlateauSchedule(cfg.lr0, cfg.lr_factor, cfg.lr_patience, cfg.stop_patience)
    best_values = net.snapshot()
    best_monitor = np.inf
    history = TrainHistory(records=[], stop_reason="max_epochs")

    for epoch in range(1, cfg.max_epochs + 1):
        tick = time.perf_counter()
        order = rng.permutation(len(tr_ids))
        running = 0.0
        lr_used = sched.lr
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            net.zero_grads()
            pred = net.forward(x_tr[batch])
            loss, grad = mde_loss(pred, y_tr[batch])
            if not np.isfinite(loss):
                history.stop_reason = "diverged"
                raise TrainingDivergedError(
                    f"non-finite loss in epoch {epoch}", history)
            net.backward(grad)
            try:
                sgd_momentum_step(params, sched.lr, cfg.momentum)
            except TrainingDivergedError as e:
                history.stop_reason = "diverged"
                raise TrainingDivergedError(f"{e} (epoch {epoch})", history) from e
            running += loss * len(batch)
        train_mde = running / len(order)
        monitor = monitor_fn(net, epoch) if monitor_fn else _batched_mde(net, x_mon, y_mon)
        improved, should_stop = sched.update(monitor)
        if monitor < best_monitor:
            best_monitor = monitor
            best_values = net.snapshot()
            if checkpoint_path is not None:
                from .models import save_checkpoint
                save_checkpoint(checkpoint_path, net, norm_scale=checkpoint_norm_scale,
                                meta={"epoch": epoch, "monitor_mde": monitor})
        history.records.append(EpochRecord(epoch, train_mde, monitor, lr_used,
                                           time.perf_counter() - tick))
        if should_stop:
            history.stop_reason = "early_stop"
            break

    net.restore(best_values)
    return net, history
