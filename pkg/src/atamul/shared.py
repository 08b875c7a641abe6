"""Worker-thread executor: every thread computes exactly one leaf task of
the shared task tree into its own disjoint window of the shared result
buffer, so the compute phase needs no locks and no atomics; the only
synchronisation is the final join."""

from __future__ import annotations

import threading

import numpy as np

from .errors import TooManyWorkersError
from .execute import execute_leaf, workspace_for_leaf
from .matrix import DenseMatrix, MultCounter, as_array, mirror_lower_to_upper
from .scheduler import TaskTree, build_tree_shared, leaf_task
from .strassen import DEFAULT_THRESHOLD

MAX_WORKERS = 128


class SharedRunner:
    """Two-phase driver: prepare() builds the tree and per-worker
    workspaces, run() executes the leaves and joins.  Benchmarks time only
    run()."""

    def __init__(self, A, procs: int, threshold: int = DEFAULT_THRESHOLD,
                 count_mults: bool = False):
        if procs < 1:
            raise ValueError("procs must be >= 1")
        if procs > MAX_WORKERS:
            raise TooManyWorkersError(
                f"too many workers: {procs} > {MAX_WORKERS}")
        self.a = as_array(A)
        self.procs = procs
        self.threshold = threshold
        self.tree: TaskTree | None = None
        self.workspaces = []
        self.counters = [MultCounter() for _ in range(procs)] if count_mults \
            else [None] * procs
        self.result: DenseMatrix | None = None

    def prepare(self) -> None:
        m, n = self.a.shape
        self.tree = build_tree_shared(self.procs, m, n)
        self.workspaces = [
            workspace_for_leaf(leaf_task(self.tree, p), self.threshold,
                               dtype=self.a.dtype)
            for p in range(self.procs)
        ]

    def run_into(self, c: np.ndarray, mirror: bool = True) -> None:
        """Execute all leaves into a caller-supplied result buffer."""
        if self.tree is None:
            self.prepare()
        errors: list[BaseException] = []

        def worker(p: int) -> None:
            try:
                execute_leaf(leaf_task(self.tree, p), self.a, c,
                             self.threshold, self.counters[p], "fast",
                             self.workspaces[p])
            except BaseException as exc:   # re-raised on the caller's thread
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(p,), name=f"ata-s-{p}")
                   for p in range(self.procs)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
        if mirror:
            mirror_lower_to_upper(c)

    def run(self) -> DenseMatrix:
        n = self.a.shape[1]
        out = DenseMatrix.zeros(n, n, dtype=self.a.dtype)
        self.run_into(out.a, mirror=True)
        self.result = out
        return out

    @property
    def max_worker_mults(self) -> int:
        return max(c.scalar_mults for c in self.counters if c is not None)


def ata_s(A, procs: int, threshold: int = DEFAULT_THRESHOLD) -> DenseMatrix:
    """Full symmetric A^T A computed by `procs` worker threads."""
    runner = SharedRunner(A, procs, threshold)
    runner.prepare()
    return runner.run()
