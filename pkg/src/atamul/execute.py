"""Leaf-task execution shared by the thread executor and the simulated
distributed executor.  Regions are absolute coordinates into the global
operand and result arrays."""

from __future__ import annotations

import numpy as np

from .ata import _ata_plan, ata, workspace_for_ata
from .matrix import MultCounter, naive_gemm_atb, naive_syrk_lower
from .scheduler import ComputationType, Region, Task
from .strassen import (StrassenWorkspace, fast_strassen, workspace_for,
                       workspace_for_calls)


def _block(array: np.ndarray, r: Region) -> np.ndarray:
    return array[r.row_offset:r.row_offset + r.rows,
                 r.col_offset:r.col_offset + r.cols]


def _stripe_split(task: Task) -> int:
    """Column index (relative to the task's operand prefix) where a stripe
    task's rectangular part ends and its diagonal block begins.  0 for plain
    square tasks."""
    return task.c_region.cols - task.c_region.rows


def workspace_for_leaf(task: Task, threshold: int,
                       dtype=np.float64) -> StrassenWorkspace:
    """A workspace sized for everything one leaf task will run."""
    a = task.a_region
    if task.computation is ComputationType.ATB:
        return workspace_for(a.rows, a.cols, task.b_region.cols, threshold,
                             dtype=dtype)
    split = _stripe_split(task)
    width = a.cols - split
    calls, base_need = _ata_plan(a.rows, width, threshold)
    if split > 0:
        calls = calls + [(a.rows, width, split)]
    return workspace_for_calls(calls, threshold, extra_base=base_need,
                               dtype=dtype)


def execute_leaf(task: Task, a_global: np.ndarray, c_global: np.ndarray,
                 threshold: int, counter: MultCounter | None = None,
                 kernel: str = "fast",
                 ws: StrassenWorkspace | None = None) -> None:
    """Run one leaf task, accumulating into c_global.

    kernel "fast" uses the recursive routines (a workspace is built on the
    fly when none is passed); kernel "naive" uses the plain loop kernels.
    """
    if kernel not in ("fast", "naive"):
        raise ValueError(f"unknown leaf kernel {kernel!r}")
    c = _block(c_global, task.c_region)
    if task.computation is ComputationType.ATB:
        a = _block(a_global, task.a_region)
        b = _block(a_global, task.b_region)
        if kernel == "naive":
            naive_gemm_atb(a, b, c, 1.0, counter)
        else:
            fast_strassen(a, b, c, 1.0, ws, threshold, counter)
        return

    prefix = _block(a_global, task.a_region)
    split = _stripe_split(task)
    tile = prefix[:, split:]
    if split > 0:
        # Stripe task: the block left of the diagonal, then the diagonal
        # block's lower triangle.
        if kernel == "naive":
            naive_gemm_atb(tile, prefix[:, :split], c[:, :split], 1.0, counter)
        else:
            fast_strassen(tile, prefix[:, :split], c[:, :split], 1.0, ws,
                          threshold, counter)
    diag = c[:, split:]
    if kernel == "naive":
        naive_syrk_lower(tile, diag, 1.0, counter)
    else:
        if ws is None:
            ws = workspace_for_ata(tile.shape[0], tile.shape[1], threshold,
                                   dtype=c_global.dtype)
        ata(tile, diag, 1.0, threshold, ws, counter)
