"""Sequential recursive computation of the lower triangle of
C += alpha * A^T A.

Each level splits A into floor/ceil quadrants; the two diagonal result blocks
come from four self-recursions (two addends each) and the below-diagonal
block from two Strassen calls.  The mirror-image above-diagonal block is
never computed or touched.  A single pre-sized workspace travels through the
whole recursion, so neither the self-recursions nor any Strassen call
allocates.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError, UnsupportedSizeError, WorkspaceUndersizedError
from .matrix import (DenseMatrix, MultCounter, as_array, mirror_lower_to_upper,
                     naive_syrk_lower)
from .strassen import (DEFAULT_THRESHOLD, StrassenWorkspace, _ceil_half,
                       _strassen_rec, is_base_case, workspace_for_calls)


def is_ata_base_case(m: int, n: int, threshold: int) -> bool:
    """Leaf when the block fits the threshold or is a single row/column,
    where splitting would create empty quadrants."""
    return m * n <= threshold or m == 1 or n == 1


def _strassen_base_need(lo: tuple[int, int, int], hi: tuple[int, int, int],
                        threshold: int) -> tuple[int, int, int]:
    """Worst base-case scratch (accumulator, lhs stage, rhs stage scalars)
    over Strassen calls whose dimensions lie between the lo and hi corners:
    the lo chain reaches the leaf predicate first, the hi chain bounds the
    block size there."""
    flm, fln, flk = lo
    chm, chn, chk = hi
    while not is_base_case(flm, fln, flk, threshold):
        flm, fln, flk = max(1, flm // 2), max(1, fln // 2), max(1, flk // 2)
        chm, chn, chk = _ceil_half(chm), _ceil_half(chn), _ceil_half(chk)
    return chn * chk, chm * chn, chm * chk


def _ata_plan(m: int, n: int, threshold: int):
    """Strassen call shapes and naive-kernel scratch one A^T A recursion can
    require.

    Walks the per-level dimension bounds (floor chain for the smallest blocks
    a path can carry, ceil chain for the largest).  The largest-corner calls
    size the per-level buffers; the base scratch takes the worst case over
    each level's whole dimension range, because a small contraction dimension
    reaches the leaf predicate early while the block is still big.
    """
    calls: list[tuple[int, int, int]] = []
    acc_need = lhs_need = rhs_need = 0
    lo_m, lo_n = m, n
    hi_m, hi_n = m, n
    while True:
        if is_ata_base_case(lo_m, lo_n, threshold):
            acc_need = max(acc_need, hi_n * hi_n)
            lhs_need = max(lhs_need, hi_m * hi_n)
        if is_ata_base_case(hi_m, hi_n, threshold):
            break
        lo_call = (max(1, lo_m // 2), max(1, lo_n // 2), max(1, lo_n // 2))
        hi_call = (hi_m - hi_m // 2, _ceil_half(hi_n), _ceil_half(hi_n))
        calls.append(hi_call)
        s_acc, s_lhs, s_rhs = _strassen_base_need(lo_call, hi_call, threshold)
        acc_need = max(acc_need, s_acc)
        lhs_need = max(lhs_need, s_lhs)
        rhs_need = max(rhs_need, s_rhs)
        lo_m, lo_n = max(1, lo_m // 2), max(1, lo_n // 2)
        hi_m, hi_n = _ceil_half(hi_m), _ceil_half(hi_n)
    return calls, (acc_need, lhs_need, rhs_need)


def workspace_for_ata(m: int, n: int, threshold: int = DEFAULT_THRESHOLD,
                      dtype=np.float64) -> StrassenWorkspace:
    """Workspace covering every Strassen call and every naive-kernel leaf of
    an A^T A recursion on an m x n input."""
    calls, base_need = _ata_plan(m, n, threshold)
    return workspace_for_calls(calls, threshold, extra_base=base_need,
                               dtype=dtype)


def _check_ata_workspace(ws: StrassenWorkspace, m, n, threshold) -> None:
    calls, (acc_need, lhs_need, rhs_need) = _ata_plan(m, n, threshold)
    if acc_need > ws.base_acc.size or lhs_need > ws.base_lhs.size \
            or rhs_need > ws.base_rhs.size:
        raise WorkspaceUndersizedError(
            "workspace undersized: A^T A leaves need "
            f"({acc_need}, {lhs_need}, {rhs_need}) scratch scalars")
    for (cm, cn, ck) in calls:
        if not ws.covers(cm, cn, ck, threshold):
            raise WorkspaceUndersizedError(
                f"workspace undersized for inner call ({cm},{cn},{ck})")


def _ata_rec(a: np.ndarray, c: np.ndarray, alpha, threshold,
             ws: StrassenWorkspace, counter) -> None:
    m, n = a.shape
    if is_ata_base_case(m, n, threshold):
        naive_syrk_lower(ws.stage_operand(a, "lhs"), c, alpha, counter,
                         work=ws.base_work(n, n))
        return
    m1, n1 = m // 2, n // 2
    a11, a12 = a[:m1, :n1], a[:m1, n1:]
    a21, a22 = a[m1:, :n1], a[m1:, n1:]
    c11 = c[:n1, :n1]
    c21 = c[n1:, :n1]
    c22 = c[n1:, n1:]
    _ata_rec(a11, c11, alpha, threshold, ws, counter)
    _ata_rec(a21, c11, alpha, threshold, ws, counter)
    _ata_rec(a12, c22, alpha, threshold, ws, counter)
    _ata_rec(a22, c22, alpha, threshold, ws, counter)
    _strassen_rec(a12, a11, c21, alpha, ws, threshold, counter, 0)
    _strassen_rec(a22, a21, c21, alpha, ws, threshold, counter, 0)


def ata(A, C, alpha=1.0, threshold: int = DEFAULT_THRESHOLD,
        ws: StrassenWorkspace | None = None,
        counter: MultCounter | None = None) -> None:
    """Lower triangle of C += alpha * A^T A for A (m x n), C (n x n).

    The strict upper triangle of C is never read or written.
    """
    a, c = as_array(A), as_array(C)
    m, n = a.shape
    if c.shape != (n, n):
        raise ShapeMismatchError(f"shape mismatch: C {c.shape} != {(n, n)}")
    if ws is None:
        ws = workspace_for_ata(m, n, threshold, dtype=c.dtype)
    else:
        _check_ata_workspace(ws, m, n, threshold)
    _ata_rec(a, c, alpha, threshold, ws, counter)


def ata_full(A, threshold: int = DEFAULT_THRESHOLD,
             counter: MultCounter | None = None) -> DenseMatrix:
    """Convenience wrapper returning the full symmetric A^T A as a fresh
    matrix: runs the lower-triangular recursion, then mirrors."""
    a = as_array(A)
    n = a.shape[1]
    out = DenseMatrix.zeros(n, n, dtype=a.dtype)
    ata(a, out.a, 1.0, threshold, None, counter)
    mirror_lower_to_upper(out.a)
    return out


def ata_mult_count(n: int) -> int:
    """Exact scalar-multiplication count of the A^T A recursion on square
    power-of-two inputs at threshold 1: (2*7**j + 4**j) / 3 for n = 2**j."""
    if n < 1 or n & (n - 1):
        raise UnsupportedSizeError(f"unsupported size: {n} is not a power of two")
    j = n.bit_length() - 1
    return (2 * 7 ** j + 4 ** j) // 3
