"""End-to-end distributed runs over in-process partition workers.

Workers hold one partition each and only ever exchange weight or gradient
vectors with the main node; no raw samples cross the boundary. Messages are
logged with byte sizes computed as-if serialized (8-byte values, 8-byte
indices for sparse payloads), so communication cost is measurable without
real networking. Gradients travel dense (generically dense for logistic
loss); solutions travel sparse.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset, PartitionSet, partition
from .merge import LocalSolutionMatrix, OwaConfig, naive_average, owa_merge
from .objective import GradientSnapshot, Regularization, local_gradient, local_objective, nnz
from .solver import SolveResult, SolverConfig, csl_update, solve_local

__all__ = [
    "Message",
    "MessageLog",
    "PartitionWorker",
    "RoundReport",
    "run_local_fits",
    "global_gradient_round",
    "run_proxcsl",
]

PHASES = (
    "initial_estimator",
    "broadcast_w",
    "collect_grads",
    "compute_global_grad",
    "csl_update",
    "single_outer_step",
)


@dataclass(frozen=True)
class Message:
    """A logged communication event: kind, payload, and accounted bytes."""

    kind: str
    payload: object
    byte_size: int
    n_entries: int

    @classmethod
    def dense(cls, kind: str, vec: np.ndarray) -> "Message":
        return cls(kind=kind, payload=vec, byte_size=8 * vec.shape[0], n_entries=vec.shape[0])

    @classmethod
    def sparse(cls, kind: str, indices: np.ndarray, values: np.ndarray) -> "Message":
        k = values.shape[0]
        return cls(kind=kind, payload=(indices, values), byte_size=16 * k, n_entries=k)


class MessageLog:
    """Append-only record of every message crossing the worker boundary."""

    def __init__(self):
        self.messages: list[Message] = []

    def log(self, msg: Message) -> Message:
        self.messages.append(msg)
        return msg

    def mark(self) -> int:
        return len(self.messages)

    def since(self, mark: int) -> list[Message]:
        return self.messages[mark:]

    @staticmethod
    def split_bytes(messages: list[Message]) -> tuple[int, int]:
        """(broadcast bytes, collected bytes) for a message segment."""
        broadcast = sum(m.byte_size for m in messages if m.kind.startswith("broadcast"))
        collected = sum(m.byte_size for m in messages if not m.kind.startswith("broadcast"))
        return broadcast, collected


class PartitionWorker:
    """One partition's compute node; reads only its own data."""

    def __init__(self, partition_id: int, data: LabeledDataset):
        self.partition_id = partition_id
        self.data = data

    @property
    def n_samples(self) -> int:
        return self.data.n_rows

    def local_fit(self, reg: Regularization, config: SolverConfig) -> tuple[Message, SolveResult]:
        result = solve_local(self.data, reg, config)
        idx = np.flatnonzero(result.w)
        return Message.sparse("local_solution", idx, result.w[idx]), result

    def local_gradient_at(self, w: np.ndarray, reg: Regularization) -> Message:
        snap = local_gradient(self.data, w, reg)
        return Message.dense("local_gradient", snap.g)

    def run_update(
        self,
        w: np.ndarray,
        global_grad: GradientSnapshot,
        config: SolverConfig,
        reg: Regularization,
    ) -> tuple[Message, SolveResult]:
        result = csl_update(self.data, w, global_grad, config, reg)
        idx = np.flatnonzero(result.w)
        return Message.sparse("updated_weights", idx, result.w[idx]), result


@dataclass
class RoundReport:
    """Per-iteration record of an update run (iteration 0 is post-init)."""

    iteration: int
    global_objective: float
    test_accuracy: float | None
    nnz: int
    bytes_broadcast: int
    bytes_collected: int
    timings: dict[str, float]
    w: np.ndarray
    final_alpha: float | None = None
    alpha_escalations: int = 0
    update_abandoned: bool = False
    init_estimates: dict[str, np.ndarray] | None = None


def _pool_map(fn, items, max_workers: int | None):
    workers = max_workers if max_workers is not None else min(len(items), os.cpu_count() or 1)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def run_local_fits(
    workers: list[PartitionWorker],
    reg: Regularization,
    config: SolverConfig | None = None,
    log: MessageLog | None = None,
    max_workers: int | None = None,
) -> LocalSolutionMatrix:
    """Fit every partition locally and collect the solutions on the main node."""
    if config is None:
        config = SolverConfig(max_outer=20)
    log = log if log is not None else MessageLog()

    def fit(worker: PartitionWorker):
        try:
            return worker.local_fit(reg, config)
        except Exception as exc:
            raise RuntimeError(f"local fit failed on partition {worker.partition_id}") from exc

    outcomes = _pool_map(fit, workers, max_workers)
    d = workers[0].data.n_cols
    cols = []
    for msg, _ in outcomes:
        log.log(msg)
        col = np.zeros(d)
        idx, vals = msg.payload
        col[idx] = vals
        cols.append(col)
    return LocalSolutionMatrix(cols)


def global_gradient_round(
    workers: list[PartitionWorker],
    w: np.ndarray,
    reg: Regularization,
    log: MessageLog | None = None,
    max_workers: int | None = None,
) -> GradientSnapshot:
    """Broadcast ``w``, collect per-partition gradients, reduce on the main node.

    The reduction is sample-weighted, so it equals the full-data gradient
    even when partitions are unequal; with equal partitions it coincides
    with the uniform average. Reduction order is fixed by partition id.
    """
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    log = log if log is not None else MessageLog()
    log.log(Message.dense("broadcast_weights", w))
    replies = _pool_map(lambda wk: wk.local_gradient_at(w, reg), workers, max_workers)
    total = 0.0
    n_total = 0
    for worker, msg in zip(workers, replies):
        if msg.payload.shape[0] != w.shape[0]:
            raise ValueError(f"gradient dimension mismatch from partition {worker.partition_id}")
        log.log(msg)
        total = total + worker.n_samples * msg.payload
        n_total += worker.n_samples
    return GradientSnapshot(g=total / n_total, at=np.array(w, copy=True))


def _test_accuracy(w: np.ndarray, test: LabeledDataset | None) -> float | None:
    if test is None:
        return None
    preds = (test.X.csc @ w > 0.0).astype(np.float64)
    return float(np.mean(preds == test.y))


def run_proxcsl(
    data: LabeledDataset,
    p: int,
    reg: Regularization,
    config: SolverConfig | None = None,
    init: str = "owa",
    k_updates: int = 2,
    mode: str = "main_node",
    seed: int = 0,
    test: LabeledDataset | None = None,
    owa_config: OwaConfig | None = None,
    local_config: SolverConfig | None = None,
    log: MessageLog | None = None,
    max_workers: int | None = None,
    parts: PartitionSet | None = None,
) -> list[RoundReport]:
    """Full pipeline: partition, local fits, one-shot merge, iterated updates.

    ``init`` picks the starting estimator (``naive`` or ``owa``); both are
    computed from the same local fits and attached to the iteration-0 report
    so a sweep can record one-shot baselines without re-fitting. ``mode``
    selects where updates run: on the main node's partition only
    (``main_node``), or on every partition with uniform averaging of the
    results (``all_node``), which costs one extra gradient broadcast and a
    sparse collection round per update. An update abandoned at the damping
    cap keeps the previous weights and is flagged, not fatal.
    """
    if init not in ("naive", "owa"):
        raise ValueError(f"unknown init {init!r}")
    if mode not in ("main_node", "all_node"):
        raise ValueError(f"unknown mode {mode!r}")
    if k_updates < 0:
        raise ValueError("k_updates must be nonnegative")
    if config is None:
        config = SolverConfig()
    log = log if log is not None else MessageLog()

    if parts is None:
        parts = partition(data, p, seed)
    workers = [PartitionWorker(k, ds) for k, ds in enumerate(parts.partitions)]

    t0 = time.perf_counter()
    mark = log.mark()
    W = run_local_fits(workers, reg, local_config, log, max_workers)
    cfg_owa = owa_config if owa_config is not None else OwaConfig(seed=seed)
    w_naive = naive_average(W)
    w_owa = owa_merge(W, parts.partitions[cfg_owa.subsample_partition], cfg_owa)
    t_init = time.perf_counter() - t0
    w = w_naive if init == "naive" else w_owa

    bytes_b, bytes_c = MessageLog.split_bytes(log.since(mark))
    timings = dict.fromkeys(PHASES, 0.0)
    timings["initial_estimator"] = t_init
    reports = [
        RoundReport(
            iteration=0,
            global_objective=local_objective(data, w, reg),
            test_accuracy=_test_accuracy(w, test),
            nnz=nnz(w),
            bytes_broadcast=bytes_b,
            bytes_collected=bytes_c,
            timings=timings,
            w=w,
            init_estimates={"naive": w_naive, "owa": w_owa},
        )
    ]

    for t in range(1, k_updates + 1):
        mark = log.mark()
        timings = dict.fromkeys(PHASES, 0.0)

        tic = time.perf_counter()
        log.log(Message.dense("broadcast_weights", w))
        timings["broadcast_w"] = time.perf_counter() - tic

        tic = time.perf_counter()
        replies = _pool_map(lambda wk: wk.local_gradient_at(w, reg), workers, max_workers)
        for msg in replies:
            log.log(msg)
        timings["collect_grads"] = time.perf_counter() - tic

        tic = time.perf_counter()
        total = np.zeros(data.n_cols)
        n_total = 0
        for worker, msg in zip(workers, replies):
            total += worker.n_samples * msg.payload
            n_total += worker.n_samples
        global_grad = GradientSnapshot(g=total / n_total, at=np.array(w, copy=True))
        timings["compute_global_grad"] = time.perf_counter() - tic

        tic = time.perf_counter()
        if mode == "main_node":
            result = csl_update(workers[0].data, w, global_grad, config, reg)
            w_new = result.w
            final_alpha = result.final_alpha
            escalations = result.n_alpha_escalations
            abandoned = result.abandoned
            outer_steps = result.outer_steps_used
        else:
            log.log(Message.dense("broadcast_gradient", global_grad.g))

            def update(worker: PartitionWorker):
                try:
                    return worker.run_update(w, global_grad, config, reg)
                except Exception as exc:
                    raise RuntimeError(
                        f"update failed on partition {worker.partition_id}"
                    ) from exc

            outcomes = _pool_map(update, workers, max_workers)
            w_new = np.zeros(data.n_cols)
            for msg, _ in outcomes:
                log.log(msg)
                idx, vals = msg.payload
                w_new[idx] += vals
            w_new /= len(workers)
            results = [res for _, res in outcomes]
            final_alpha = max(res.final_alpha for res in results)
            escalations = sum(res.n_alpha_escalations for res in results)
            abandoned = any(res.abandoned for res in results)
            outer_steps = sum(res.outer_steps_used for res in results)
        t_update = time.perf_counter() - tic
        timings["csl_update"] = t_update
        timings["single_outer_step"] = t_update / max(1, outer_steps)

        w = w_new
        bytes_b, bytes_c = MessageLog.split_bytes(log.since(mark))
        reports.append(
            RoundReport(
                iteration=t,
                global_objective=local_objective(data, w, reg),
                test_accuracy=_test_accuracy(w, test),
                nnz=nnz(w),
                bytes_broadcast=bytes_b,
                bytes_collected=bytes_c,
                timings=timings,
                w=w,
                final_alpha=final_alpha,
                alpha_escalations=escalations,
                update_abandoned=abandoned,
            )
        )
    return reports
