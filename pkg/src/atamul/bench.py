"""Benchmark and utility command line.

Generates or loads matrices, runs one of the executors (or the plain loop
oracle), checks results, and reports timing plus effective GFLOPs, a
normalisation that divides the classical operation count by the elapsed
time so fast and classical multiplication are comparable on one axis.
"""

from __future__ import annotations

import argparse
import csv
import os
import statistics
import sys
import time
from dataclasses import dataclass

import numpy as np

from .ata import ata, workspace_for_ata
from .distsim import ata_d
from .errors import InvalidMeasurementError
from .matrix import (DenseMatrix, MultCounter, mirror_lower_to_upper,
                     naive_syrk_lower, read_matrix, write_matrix)
from .scheduler import build_tree_distributed, build_tree_shared, render_tree
from .shared import SharedRunner
from .strassen import DEFAULT_THRESHOLD

CSV_HEADER = ["mode", "m", "n", "procs", "threshold", "reps", "median_s",
              "eff_gflops", "max_abs_err", "mult_count"]


@dataclass
class BenchRecord:
    mode: str
    m: int
    n: int
    procs: int
    threshold: int
    reps: int
    median_s: float
    eff_gflops: float
    max_abs_err: float | None = None
    mult_count: int | None = None
    compute_s: float | None = None     # dist mode: kernel+merge time
    comm_s: float | None = None        # dist mode: median_s - compute_s
    check_failed: bool = False

    def csv_row(self) -> list:
        return [self.mode, self.m, self.n, self.procs, self.threshold,
                self.reps, f"{self.median_s:.6g}", f"{self.eff_gflops:.6g}",
                "" if self.max_abs_err is None else f"{self.max_abs_err:.6g}",
                "" if self.mult_count is None else self.mult_count]


def effective_gflops(m: int, n: int, seconds: float, r: int = 1) -> float:
    """r * m * n^2 / (seconds * 1e9).  For square inputs this is the usual
    r*n^3 normalisation; r=1 for A^T A-specific algorithms, r=2 for general
    multiplication."""
    if seconds <= 0:
        raise InvalidMeasurementError(f"invalid measurement: {seconds} s")
    if r not in (1, 2):
        raise ValueError("r must be 1 or 2")
    return r * m * n * n / (seconds * 1e9)


def gen_matrix(m: int, n: int, seed: int, dist: str = "uniform",
               dtype=np.float64) -> DenseMatrix:
    """Deterministic random matrix with entries uniform in [-1, 1]."""
    if dist != "uniform":
        raise ValueError(f"unknown distribution {dist!r}")
    rng = np.random.default_rng(seed)
    return DenseMatrix(rng.uniform(-1.0, 1.0, (m, n)).astype(dtype))


def _oracle_gram(a: np.ndarray) -> np.ndarray:
    n = a.shape[1]
    c = np.zeros((n, n), dtype=a.dtype)
    naive_syrk_lower(a, c, 1.0)
    mirror_lower_to_upper(c)
    return c


def check_tolerance(a: np.ndarray) -> float:
    scale = float(np.abs(a).max()) if a.size else 1.0
    unit = 1e-9 if a.dtype == np.float64 else 1e-4
    return unit * a.shape[0] * max(scale, 1e-30) ** 2


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="atamul",
        description="Benchmark the recursive A^T A kernels.")
    p.add_argument("--mode", choices=["seq", "shared", "dist", "oracle"],
                   default="seq")
    p.add_argument("--m", type=int, default=None,
                   help="rows of A (defaults to --n)")
    p.add_argument("--n", type=int, default=1024, help="columns of A")
    p.add_argument("--procs", type=int, default=None,
                   help="workers/processes (shared and dist modes only)")
    p.add_argument("--threshold", type=int, default=None,
                   help="base-case element-count threshold "
                        "(default 32768, or env ATA_THRESHOLD)")
    p.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5,
                   help="timed repetitions; the median is reported")
    p.add_argument("--check", action="store_true",
                   help="compare each result against the loop-kernel oracle")
    p.add_argument("--csv", metavar="PATH", help="append the record to a CSV")
    p.add_argument("--comm-csv", metavar="PATH",
                   help="write per-process communication counters (dist only)")
    p.add_argument("--count-mults", action="store_true",
                   help="report the exact scalar-multiplication count")
    p.add_argument("--in", dest="in_path", metavar="PATH",
                   help="read A from an ATAM file instead of generating")
    p.add_argument("--out", dest="out_path", metavar="PATH",
                   help="write the generated A to an ATAM file")
    p.add_argument("--leaf-kernel", choices=["fast", "naive"], default="fast",
                   help="kernel used by dist-mode leaves")
    p.add_argument("--dump-tree", action="store_true",
                   help="print the scheduler tree and exit")
    return p


def _validate(args) -> None:
    if args.mode in ("seq", "oracle") and args.procs is not None:
        raise SystemExit(f"--procs is not valid with --mode {args.mode}")
    if args.mode in ("shared", "dist") and args.procs is None:
        args.procs = 1
    if args.comm_csv and args.mode != "dist":
        raise SystemExit("--comm-csv is only valid with --mode dist")
    if args.threshold is None:
        args.threshold = int(os.environ.get("ATA_THRESHOLD",
                                            DEFAULT_THRESHOLD))
    if args.m is None:
        args.m = args.n


def run_bench(args) -> list[BenchRecord]:
    dtype = np.float64 if args.dtype == "f64" else np.float32
    if args.in_path:
        A = read_matrix(args.in_path)
        args.m, args.n = A.rows, A.cols
    else:
        A = gen_matrix(args.m, args.n, args.seed, dtype=dtype)
    if args.out_path:
        write_matrix(args.out_path, A)
    a = A.a
    procs = args.procs or 1
    threshold = args.threshold
    counter = MultCounter() if args.count_mults else None
    comm_stats = None

    if args.mode == "seq":
        ws = workspace_for_ata(args.m, args.n, threshold, dtype=dtype)

        def once():
            c = np.zeros((args.n, args.n), dtype=dtype)
            ata(a, c, 1.0, threshold, ws, counter)
            mirror_lower_to_upper(c)
            return c, None
    elif args.mode == "oracle":
        def once():
            c = np.zeros((args.n, args.n), dtype=dtype)
            naive_syrk_lower(a, c, 1.0, counter)
            mirror_lower_to_upper(c)
            return c, None
    elif args.mode == "shared":
        runner = SharedRunner(A, procs, threshold,
                              count_mults=args.count_mults)
        runner.prepare()

        def once():
            return runner.run().a, None
    else:  # dist
        def once():
            c, stats = ata_d(A, procs, threshold, args.leaf_kernel,
                             counter=counter)
            return c.a, stats

    oracle = _oracle_gram(a.copy()) if args.check else None
    tol = check_tolerance(a) if args.check else None

    if counter is not None:
        counter.reset()
    result, comm_stats = once()      # warmup; also the counted run
    mult_count = None
    if args.mode == "shared" and args.count_mults:
        mult_count = sum(c.scalar_mults for c in runner.counters)
        for c in runner.counters:
            c.enabled = False
    elif counter is not None:
        mult_count = counter.scalar_mults
        counter.enabled = False

    times = []
    max_err = None
    for _ in range(args.reps):
        t0 = time.perf_counter()
        result, stats_i = once()
        times.append(time.perf_counter() - t0)
        if stats_i is not None:
            comm_stats = stats_i
        if args.check:
            err = float(np.abs(result - oracle).max())
            max_err = err if max_err is None else max(max_err, err)

    median_s = statistics.median(times)
    rec = BenchRecord(
        mode=args.mode, m=args.m, n=args.n, procs=procs, threshold=threshold,
        reps=args.reps, median_s=median_s,
        eff_gflops=effective_gflops(args.m, args.n, median_s, r=1),
        max_abs_err=max_err, mult_count=mult_count)
    if comm_stats is not None:
        rec.compute_s = comm_stats.compute_seconds
        rec.comm_s = max(0.0, median_s - comm_stats.compute_seconds)
        if args.comm_csv:
            comm_stats.write_csv(args.comm_csv)
    if args.check and max_err is not None and max_err > tol:
        print(f"CHECK FAILED: max abs error {max_err:g} > tolerance {tol:g}",
              file=sys.stderr)
        rec.check_failed = True
    return [rec]


def _write_csv(path: str, records: list[BenchRecord]) -> None:
    fresh = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if fresh:
            w.writerow(CSV_HEADER)
        for rec in records:
            w.writerow(rec.csv_row())


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    _validate(args)

    if args.dump_tree:
        m = args.m if args.m is not None else args.n
        if args.mode == "dist":
            tree = build_tree_distributed(args.procs or 1, m, args.n)
        else:
            tree = build_tree_shared(args.procs or 1, m, args.n)
        print(render_tree(tree))
        return 0

    records = run_bench(args)
    failed = any(getattr(rec, "check_failed", False) for rec in records)
    for rec in records:
        line = (f"{rec.mode} m={rec.m} n={rec.n} procs={rec.procs} "
                f"threshold={rec.threshold}: median {rec.median_s:.4g} s, "
                f"{rec.eff_gflops:.3f} effective GFLOPs")
        if rec.comm_s is not None:
            line += f" (compute {rec.compute_s:.4g} s, comm {rec.comm_s:.4g} s)"
        if rec.max_abs_err is not None:
            line += f", max abs err {rec.max_abs_err:.3g}"
        if rec.mult_count is not None:
            line += f", {rec.mult_count} scalar mults"
        print(line)
    if args.csv:
        _write_csv(args.csv, records)
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
