"""Deterministic in-process simulation of the distribute-compute-retrieve
executor.

Every simulated process runs the same program: build the task tree, receive
the operand blocks of its topmost owned node from that node's parent owner,
forward each child's operand blocks down its owned chain, compute its own
leaf, then collect child partials bottom-up, summing same-region addends in
child order, and finally ship its subtree's result block to its parent.
Process 0 starts out holding the whole input and ends up holding the whole
lower triangle, which it mirrors.

The network is a set of FIFO mailboxes keyed by (source, destination): no
loss, no duplication, in-order per pair.  One send is one message whatever
the number of operand blocks it carries, matching how the communication
cost model counts.  Result blocks of A^T A-type nodes travel as packed lower
triangles (r*(r+1)/2 words); everything else travels as a dense rectangle.

The scheduler interleaves runnable processes in an arbitrary (seedable)
order; because every process consumes messages from explicitly named peers
in a fixed program order, the final output is identical under every
interleaving.  A receive that can never be satisfied stops the run with a
protocol error rather than hanging.
"""

from __future__ import annotations

import csv
import random
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ProtocolError
from .execute import execute_leaf, workspace_for_leaf
from .matrix import (DenseMatrix, MultCounter, _tril_indices, as_array,
                     mirror_lower_to_upper)
from .scheduler import (ComputationType, Region, Task, TaskTree,
                        build_tree_distributed, levels_distributed,
                        path_to_root)
from .strassen import DEFAULT_THRESHOLD


@dataclass
class MessagePart:
    kind: str                 # "rect" | "packed"
    region: Region            # absolute coordinates in the global matrix
    data: np.ndarray          # flat payload, length rows*cols or r*(r+1)/2

    def __post_init__(self):
        r = self.region
        expect = r.rows * r.cols if self.kind == "rect" \
            else r.rows * (r.rows + 1) // 2
        if self.data.size != expect:
            raise ProtocolError(
                f"protocol error: payload length {self.data.size} != {expect}")


@dataclass
class Message:
    src: int
    dst: int
    parts: list[MessagePart]

    @property
    def words(self) -> int:
        return sum(part.data.size for part in self.parts)


@dataclass
class CommStats:
    """Message and word counters per process, plus the critical path: the
    messages sent or received by process 0."""

    procs: int
    sent_messages: list[int] = field(default_factory=list)
    sent_words: list[int] = field(default_factory=list)
    recv_messages: list[int] = field(default_factory=list)
    recv_words: list[int] = field(default_factory=list)
    compute_seconds: float = 0.0

    def __post_init__(self):
        for name in ("sent_messages", "sent_words", "recv_messages",
                     "recv_words"):
            if not getattr(self, name):
                setattr(self, name, [0] * self.procs)

    @property
    def critical_path_messages(self) -> int:
        return self.sent_messages[0] + self.recv_messages[0]

    @property
    def total_messages(self) -> int:
        return sum(self.sent_messages)

    @property
    def total_words(self) -> int:
        return sum(self.sent_words)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["process", "sent_messages", "sent_words",
                        "recv_messages", "recv_words"])
            for p in range(self.procs):
                w.writerow([p, self.sent_messages[p], self.sent_words[p],
                            self.recv_messages[p], self.recv_words[p]])
            w.writerow(["critical_path", self.sent_messages[0],
                        self.sent_words[0], self.recv_messages[0],
                        self.recv_words[0]])


# ---------------------------------------------------------------------------
# Simulation engine
# ---------------------------------------------------------------------------


def run_processes(gens: dict, seed: int = 0):
    """Drive generator-based processes that yield ("send", Message) and
    ("recv", src) requests.  Returns {pid: return value}.  Raises
    ProtocolError on deadlock or undelivered mail."""
    rng = random.Random(seed)
    mailboxes: dict[tuple[int, int], deque] = {}
    waiting: dict[int, int] = {}     # pid -> source it is blocked on
    inbox: dict[int, Message] = {}   # delivery to hand to a resumed process
    results = {}
    runnable = sorted(gens)

    def step(p: int) -> None:
        value = inbox.pop(p, None)
        try:
            req = gens[p].send(value)
            while True:
                if req[0] == "send":
                    msg = req[1]
                    mailboxes.setdefault((msg.src, msg.dst), deque()).append(msg)
                    if waiting.get(msg.dst) == msg.src:
                        del waiting[msg.dst]
                        box = mailboxes[(msg.src, msg.dst)]
                        inbox[msg.dst] = box.popleft()
                        runnable.append(msg.dst)
                    req = gens[p].send(None)
                elif req[0] == "recv":
                    src = req[1]
                    box = mailboxes.get((src, p))
                    if box:
                        req = gens[p].send(box.popleft())
                    else:
                        waiting[p] = src
                        return
                else:
                    raise ProtocolError(f"protocol error: bad request {req!r}")
        except StopIteration as stop:
            results[p] = stop.value

    while runnable:
        idx = rng.randrange(len(runnable))
        runnable[idx], runnable[-1] = runnable[-1], runnable[idx]
        step(runnable.pop())

    if len(results) != len(gens):
        stuck = sorted(set(gens) - set(results))
        raise ProtocolError(
            f"protocol error: deadlock, processes {stuck} still waiting on "
            f"{ {p: waiting.get(p) for p in stuck} }")
    for (src, dst), box in mailboxes.items():
        if box:
            raise ProtocolError(
                f"protocol error: {len(box)} undelivered messages {src}->{dst}")
    return results


# ---------------------------------------------------------------------------
# The distributed A^T A program
# ---------------------------------------------------------------------------


def _rect_part(a_local: np.ndarray, region: Region) -> MessagePart:
    block = a_local[region.row_offset:region.row_offset + region.rows,
                    region.col_offset:region.col_offset + region.cols]
    return MessagePart("rect", region, np.ascontiguousarray(block).ravel().copy())


def _operand_parts(a_local: np.ndarray, task: Task) -> list[MessagePart]:
    parts = [_rect_part(a_local, task.a_region)]
    if task.b_region is not None:
        parts.append(_rect_part(a_local, task.b_region))
    return parts


def _result_part(c_local: np.ndarray, task: Task) -> MessagePart:
    r = task.c_region
    block = c_local[r.row_offset:r.row_offset + r.rows,
                    r.col_offset:r.col_offset + r.cols]
    if task.computation is ComputationType.ATA:
        il, jl = _tril_indices(r.rows)
        return MessagePart("packed", r, block[il, jl].copy())
    return MessagePart("rect", r, np.ascontiguousarray(block).ravel().copy())


def _apply_operand(a_local: np.ndarray, part: MessagePart) -> None:
    r = part.region
    a_local[r.row_offset:r.row_offset + r.rows,
            r.col_offset:r.col_offset + r.cols] = part.data.reshape(r.rows, r.cols)


def _apply_partial(c_local: np.ndarray, part: MessagePart) -> None:
    r = part.region
    block = c_local[r.row_offset:r.row_offset + r.rows,
                    r.col_offset:r.col_offset + r.cols]
    if part.kind == "packed":
        il, jl = _tril_indices(r.rows)
        block[il, jl] += part.data
    else:
        block += part.data.reshape(r.rows, r.cols)


def _process(p: int, tree: TaskTree, a_input: np.ndarray | None,
             threshold: int, leaf_kernel: str, dtype,
             counter: MultCounter | None, clock: list[float]):
    chain = path_to_root(tree, p)
    top = chain[-1]
    m, n = tree.m, tree.n

    if p == 0:
        a_local = a_input
    else:
        a_local = np.zeros((m, n), dtype=dtype)
        msg = yield ("recv", top.task.parent)
        for part in msg.parts:
            _apply_operand(a_local, part)

    # Distribution: forward each non-owned child its operand blocks,
    # top of the owned chain first.
    for node in reversed(chain):
        for child in tree.children_of(node):
            owner = child.task.owner
            if owner != p:
                yield ("send", Message(p, owner,
                                       _operand_parts(a_local, child.task)))

    c_local = np.zeros((n, n), dtype=dtype)
    leaf = chain[0]
    ws = None
    if leaf_kernel == "fast":
        ws = workspace_for_leaf(leaf.task, threshold, dtype=dtype)
    t0 = time.perf_counter()
    execute_leaf(leaf.task, a_local, c_local, threshold, counter,
                 leaf_kernel, ws)
    clock[0] += time.perf_counter() - t0

    # Retrieval: collect child partials bottom-up in child order, summing
    # addends that target the same region.
    for node in chain:
        for child in tree.children_of(node):
            owner = child.task.owner
            if owner != p:
                msg = yield ("recv", owner)
                t0 = time.perf_counter()
                for part in msg.parts:
                    _apply_partial(c_local, part)
                clock[0] += time.perf_counter() - t0

    if top.parent_id is not None:
        yield ("send", Message(p, top.task.parent, [_result_part(c_local,
                                                                 top.task)]))
        return None
    return c_local


def ata_d(A, procs: int, threshold: int = DEFAULT_THRESHOLD,
          leaf_kernel: str = "fast", scheduler_seed: int = 0,
          counter: MultCounter | None = None,
          trace: list | None = None) -> tuple[DenseMatrix, CommStats]:
    """Full symmetric A^T A over `procs` simulated processes, with the input
    initially resident only on process 0.  Returns the result and the
    communication counters.  When `trace` is a list it collects one
    (src, dst, [(kind, region, words), ...]) record per message."""
    if leaf_kernel not in ("fast", "naive"):
        raise ValueError(f"unknown leaf kernel {leaf_kernel!r}")
    a = as_array(A)
    m, n = a.shape
    tree = build_tree_distributed(procs, m, n)
    stats = CommStats(procs)
    clock = [0.0]
    gens = {
        p: _instrumented(_process(p, tree, a if p == 0 else None, threshold,
                                  leaf_kernel, a.dtype, counter, clock),
                         stats, trace)
        for p in range(procs)
    }
    results = run_processes(gens, seed=scheduler_seed)
    stats.compute_seconds = clock[0]
    c = results[0]
    mirror_lower_to_upper(c)
    return DenseMatrix(c), stats


def _instrumented(gen, stats: CommStats, trace: list | None = None):
    """Wrap a process generator so sends and receives update the counters."""
    value = None
    while True:
        try:
            req = gen.send(value)
        except StopIteration as stop:
            return stop.value
        if req[0] == "send":
            msg = req[1]
            stats.sent_messages[msg.src] += 1
            stats.sent_words[msg.src] += msg.words
            if trace is not None:
                trace.append((msg.src, msg.dst,
                              [(part.kind, part.region, part.data.size)
                               for part in msg.parts]))
            value = yield req
        else:
            value = yield req
            if value is not None:
                stats.recv_messages[value.dst] += 1
                stats.recv_words[value.dst] += value.words


# ---------------------------------------------------------------------------
# Communication-cost bound checking
# ---------------------------------------------------------------------------


@dataclass
class CommReport:
    procs: int
    n: int
    levels: int
    latency_observed: int
    latency_bound: float
    words_observed: int
    words_bound: float
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "ok" if self.ok else "FAILED " + "; ".join(self.failures)
        return (f"P={self.procs} n={self.n} levels={self.levels}: "
                f"critical-path messages {self.latency_observed} "
                f"(bound {self.latency_bound:g}), total words "
                f"{self.words_observed} (bound {self.words_bound:g}) "
                f"-> {status}")


def comm_bound_latency(procs: int) -> float:
    """Critical-path message bound: twice (once per phase) seven messages
    per level below the first plus five at the first."""
    levels = levels_distributed(procs)
    if levels == 0:
        return 0.0
    return 2 * (7 * (levels - 1) + 5)


def comm_bound_words(n: int, procs: int) -> float:
    """Word-count bound combining the distribution and retrieval phases.

    One level: five half-size blocks out, one half-size rectangle and four
    packed half-size triangles back.  Deeper trees add the quarter-and-below
    geometric term for both phases.
    """
    levels = levels_distributed(procs)
    if levels == 0:
        return 0.0
    half_sq = (n / 2) ** 2
    if levels == 1:
        return 5 * half_sq + half_sq + 4 * (n * (n + 2) / 8)
    return 6 * half_sq + n * (n + 2) / 2 \
        + (7 / 6) * n * n * (1 - 0.25 ** (levels - 2))


def verify_comm_bounds(stats: CommStats, n: int, procs: int) -> CommReport:
    """Check recorded counters against the latency and bandwidth bounds."""
    levels = levels_distributed(procs)
    lat_bound = comm_bound_latency(procs)
    words_bound = comm_bound_words(n, procs)
    report = CommReport(procs, n, levels, stats.critical_path_messages,
                        lat_bound, stats.total_words, words_bound)
    if stats.critical_path_messages > lat_bound:
        report.failures.append(
            f"critical-path messages {stats.critical_path_messages} "
            f"> bound {lat_bound:g}")
    if stats.total_words > words_bound:
        report.failures.append(
            f"total words {stats.total_words} > bound {words_bound:g}")
    return report
