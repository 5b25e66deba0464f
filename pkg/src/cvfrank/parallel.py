"""Synchronous data-parallel training.

Each global batch is cut into contiguous shards, one per worker. Workers hold
private parameter replicas, compute shard gradients concurrently, and wait at
a barrier; the gradients are then combined in ascending worker-rank order into
the shard-size-weighted mean (which equals the full-batch gradient), a single
Adam update is applied to the master model and the result is broadcast back to
every replica.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from cvfrank.errors import ConfigurationError, NumericFailureError, WorkerFaultError
from cvfrank.mlp import AdamState, MlpModel, adam_step, backward, forward, loss_mse, metric_mae
from cvfrank.validation import check_positive_int, check_xy

PRESETS = {
    "fnn": {"epochs": 300, "batch_size": 32, "lr": 1e-3},
    "mirrored": {"epochs": 200, "batch_size": 64, "lr": 1e-3},
}


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0
    dropout: bool = True
    batchnorm: bool = True

    def __post_init__(self):
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")

    @classmethod
    def preset(cls, name: str, **overrides) -> "TrainConfig":
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})


@dataclass
class ParallelConfig:
    workers: int = 1

    def __post_init__(self):
        check_positive_int(self.workers, "workers")


@dataclass
class StepReport:
    epoch: int
    step: int
    loss: float
    seconds: float


@dataclass
class EpochMetrics:
    epoch: int
    loss: float
    val_mae: float | None
    seconds: float


@dataclass
class WorkerResult:
    rank: int
    n_rows: int
    loss: float
    grads: dict[str, np.ndarray]
    running_mean: np.ndarray | None
    running_var: np.ndarray | None


def shard_batch(batch, workers: int) -> list:
    """Split ``batch`` along its first axis into ``workers`` contiguous shards.

    Sizes differ by at most one, larger shards first.
    """
    workers = check_positive_int(workers, "workers")
    n = len(batch)
    if n == 0:
        raise ConfigurationError("cannot shard an empty batch")
    if workers > n:
        raise ConfigurationError(f"{workers} workers for a batch of {n} rows")
    base, extra = divmod(n, workers)
    out, start = [], 0
    for r in range(workers):
        stop = start + base + (1 if r < extra else 0)
        out.append(batch[start:stop])
        start = stop
    return out


def ordered_mean_reduce(results: Sequence[WorkerResult], total: int) -> dict[str, np.ndarray]:
    """Shard-size-weighted mean of worker gradients, summed in rank order."""
    results = sorted(results, key=lambda r: r.rank)
    agg = {}
    for res in results:
        w = res.n_rows / total
        for name, g in res.grads.items():
            if name in agg:
                agg[name] = agg[name] + w * g
            else:
                agg[name] = w * g
    return agg


def dropout_rng(seed: int, step: int, rank: int) -> np.random.Generator:
    return np.random.default_rng([seed, step, rank])


class DataParallelTrainer:
    """Long-lived worker pool around a master model and its Adam state."""

    def __init__(self, model: MlpModel, workers: int = 1, lr: float = 1e-3, seed: int = 0,
                 reduce: Callable[[Sequence[WorkerResult], int], dict] = ordered_mean_reduce,
                 state: AdamState | None = None):
        self.model = model
        self.workers = check_positive_int(workers, "workers")
        self.seed = seed
        self.reduce = reduce
        self.state = state if state is not None else AdamState.for_model(model, lr)
        self.replicas = [model.copy() for _ in range(self.workers)]
        self.steps = 0
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _worker_grad(self, rank: int, X: np.ndarray, y: np.ndarray) -> WorkerResult:
        replica = self.replicas[rank]
        pred, cache = forward(replica, X, "train", dropout_rng(self.seed, self.steps, rank))
        grads = backward(replica, cache, y)
        return WorkerResult(rank, len(y), loss_mse(pred, y), grads,
                            replica.running_mean, replica.running_var)

    def compute_gradients(self, X, y) -> tuple[dict[str, np.ndarray], float, list[WorkerResult]]:
        """Run every worker on its shard and reduce; nothing is updated."""
        workers = min(self.workers, len(y))
        xs, ys = shard_batch(X, workers), shard_batch(y, workers)
        try:
            if self._pool is None or workers == 1:
                results = [self._worker_grad(r, xs[r], ys[r]) for r in range(workers)]
            else:
                futures = [self._pool.submit(self._worker_grad, r, xs[r], ys[r]) for r in range(workers)]
                results = [f.result() for f in futures]  # barrier
        except Exception as exc:
            self._resync()
            raise WorkerFaultError(f"worker failed during step {self.steps}: {exc}") from exc
        total = len(y)
        loss = sum((r.n_rows / total) * r.loss for r in results)
        return self.reduce(results, total), loss, results

    def step(self, X, y, epoch: int = 0) -> StepReport:
        t0 = time.perf_counter()
        grads, loss, results = self.compute_gradients(X, y)
        if not np.isfinite(loss):
            raise NumericFailureError(f"non-finite loss {loss} at epoch {epoch}, step {self.steps}")
        adam_step(self.model, grads, self.state)
        if self.model.has_batchnorm:
            total = len(y)
            self.model.running_mean = sum((r.n_rows / total) * r.running_mean for r in results)
            self.model.running_var = sum((r.n_rows / total) * r.running_var for r in results)
        self._resync()
        self.steps += 1
        return StepReport(epoch, self.steps - 1, float(loss), time.perf_counter() - t0)

    def _resync(self):
        """Broadcast master parameters and running statistics to every replica."""
        m = self.model
        for rep in self.replicas:
            for name in m.param_names():
                rep.params[name] = m.params[name].copy()
            if m.running_mean is not None:
                rep.running_mean = m.running_mean.copy()
                rep.running_var = m.running_var.copy()
            rep.version = m.version

    def replicas_in_sync(self) -> bool:
        m = self.model
        for rep in self.replicas:
            for name in m.param_names():
                if not np.array_equal(rep.params[name], m.params[name]):
                    return False
        return True


def _batches(n: int, batch_size: int, perm: np.ndarray, merge_singleton: bool) -> list[np.ndarray]:
    out = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if merge_singleton and len(out) > 1 and len(out[-1]) == 1:
        out[-2] = np.concatenate([out[-2], out.pop()])
    return out


def fit(model: MlpModel, X, y, config: TrainConfig, parallel: ParallelConfig | None = None,
        X_val=None, y_val=None, callback: Callable[[EpochMetrics], None] | None = None,
        ) -> list[EpochMetrics]:
    """Train ``model`` in place; returns per-epoch metrics."""
    parallel = parallel or ParallelConfig()
    X, y = check_xy(X, y, model.widths[0])
    if len(y) == 0:
        raise ConfigurationError("empty training set")
    if X_val is not None:
        X_val, y_val = check_xy(X_val, y_val, model.widths[0])
    model.use_dropout = config.dropout
    model.use_batchnorm = config.batchnorm
    model.mode = "train"
    rng = np.random.default_rng(config.seed)
    history = []
    n = len(y)
    with DataParallelTrainer(model, parallel.workers, config.lr, config.seed) as trainer:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            perm = rng.permutation(n)
            total = 0.0
            for idx in _batches(n, config.batch_size, perm, model.has_batchnorm):
                try:
                    rep = trainer.step(X[idx], y[idx], epoch)
                except NumericFailureError as exc:
                    raise NumericFailureError(f"training diverged: {exc}") from exc
                total += rep.loss * len(idx)
            val_mae = evaluate(model, X_val, y_val)[1] if X_val is not None else None
            metrics = EpochMetrics(epoch, total / n, val_mae, time.perf_counter() - t0)
            history.append(metrics)
            if callback is not None:
                callback(metrics)
    model.mode = "eval"
    return history


def evaluate(model: MlpModel, X, y, batch_size: int = 65536) -> tuple[float, float]:
    """(MSE, MAE) of the eval-mode model over all rows."""
    X, y = check_xy(X, y, model.widths[0])
    if len(y) == 0:
        raise ConfigurationError("cannot evaluate on an empty set")
    pred = np.concatenate([forward(model, X[i:i + batch_size], "eval")[0]
                           for i in range(0, len(y), batch_size)])
    return loss_mse(pred, y), metric_mae(pred, y)
