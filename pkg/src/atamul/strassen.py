"""Strassen multiply for C += alpha * A^T B on arbitrary rectangular blocks.

All scratch space lives in a StrassenWorkspace allocated once up front:

* one (lhs, rhs, prod) buffer triple per recursion depth, sized by the
  ceil-halved dimension chain of the largest call the workspace was built
  for.  A node at depth d builds its operand combinations in the depth-d
  lhs/rhs buffers and its current sub-product in the depth-d prod buffer;
  the recursive call that fills the product uses the depth-(d+1) triple, so
  one triple per depth is enough.
* three base-case blocks (product accumulator plus two operand stages),
  sized for the largest call any recursion path can hand to the naive
  kernel.

Once the workspace exists, fast_strassen allocates nothing.

Odd dimensions never get peeled or padded.  Operand sums are materialised at
the size of their real content and truncated additions reconcile the one-row/
one-column mismatches, which is equivalent to computing on virtually
zero-padded blocks.  When the two operands of a sub-product disagree on the
contraction length, the longer one is cut to the shorter: the surplus rows
would only ever multiply virtual zero rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatchError, UnsupportedSizeError, WorkspaceUndersizedError
from .matrix import (MultCounter, _new_buffer, add_truncated, as_array,
                     naive_gemm_atb)

DEFAULT_THRESHOLD = 1 << 15


def is_base_case(m: int, n: int, k: int, threshold: int) -> bool:
    """A call is a leaf when the combined operand size fits the threshold or
    when any dimension is 1, where a quadrant split would go empty."""
    return m * n + m * k <= threshold or min(m, n, k) == 1


def _ceil_half(d: int) -> int:
    return (d + 1) // 2


def _chain(m, n, k, threshold):
    """Yield the ceil-halved dimensions (m_i, n_i, k_i) of each recursion
    depth i >= 1, stopping when the ceil chain itself reaches a base case."""
    cm, cn, ck = m, n, k
    while not is_base_case(cm, cn, ck, threshold):
        cm, cn, ck = _ceil_half(cm), _ceil_half(cn), _ceil_half(ck)
        yield cm, cn, ck


def _base_dims(m, n, k, threshold) -> tuple[int, int, int]:
    """Dimensions of the largest call a recursion starting from (m, n, k)
    can hand to the base-case kernel.

    The floor-halved chain reaches the base predicate first (smaller operands
    satisfy it sooner and hit a 1-dimension sooner); at that depth the actual
    dimensions are at most the ceil-halved chain's, so those bound the
    scratch requirement.
    """
    fm, fn, fk = m, n, k
    cm, cn, ck = m, n, k
    while not is_base_case(fm, fn, fk, threshold):
        fm, fn, fk = fm // 2, fn // 2, fk // 2
        cm, cn, ck = _ceil_half(cm), _ceil_half(cn), _ceil_half(ck)
    return cm, cn, ck


@dataclass
class _Level:
    prod: np.ndarray      # flat, holds one (n_i x k_i) sub-product
    lhs: np.ndarray       # flat, holds one (m_i x n_i) operand sum
    rhs: np.ndarray       # flat, holds one (m_i x k_i) operand sum

    def take(self, name, rows, cols) -> np.ndarray:
        buf = getattr(self, name)
        if rows * cols > buf.size:
            raise WorkspaceUndersizedError(
                f"workspace undersized: level buffer {name} < {rows}x{cols}")
        return buf[:rows * cols].reshape(rows, cols)


class StrassenWorkspace:
    """Pre-allocated scratch for fast_strassen (and for the recursive A^T A
    driver, which threads one workspace through all its Strassen calls).

    Besides the per-depth buffers there are three base-case blocks: one
    product accumulator and two operand stages.  Strided operand views get
    copied into the stages before the base kernel runs, so the contraction
    always works on contiguous memory (noticeably faster, and the kernel
    then spends nearly all its time outside the interpreter lock)."""

    def __init__(self, levels: list[_Level], base_acc: np.ndarray,
                 base_lhs: np.ndarray, base_rhs: np.ndarray,
                 threshold: int, dtype):
        self.levels = levels
        self.base_acc = base_acc
        self.base_lhs = base_lhs
        self.base_rhs = base_rhs
        self.threshold = threshold
        self.dtype = np.dtype(dtype)

    @property
    def total_scalars(self) -> int:
        total = self.base_acc.size + self.base_lhs.size + self.base_rhs.size
        for lv in self.levels:
            total += lv.prod.size + lv.lhs.size + lv.rhs.size
        return total

    def base_work(self, n: int, k: int) -> np.ndarray:
        if n * k > self.base_acc.size:
            raise WorkspaceUndersizedError(
                f"workspace undersized: base scratch < {n}x{k}")
        return self.base_acc[:n * k].reshape(n, k)

    def stage_operand(self, x: np.ndarray, which: str) -> np.ndarray:
        """Return x itself when contiguous, else a contiguous copy staged in
        the named base buffer."""
        if x.flags.c_contiguous:
            return x
        buf = self.base_lhs if which == "lhs" else self.base_rhs
        if x.size > buf.size:
            raise WorkspaceUndersizedError(
                f"workspace undersized: operand stage < {x.shape}")
        staged = buf[:x.size].reshape(x.shape)
        np.copyto(staged, x)
        return staged

    def covers(self, m: int, n: int, k: int, threshold: int) -> bool:
        """True when every buffer this call's recursion can touch fits."""
        for depth, dims in enumerate(_chain(m, n, k, threshold)):
            if depth >= len(self.levels):
                return False
            cm, cn, ck = dims
            lv = self.levels[depth]
            if (cn * ck > lv.prod.size or cm * cn > lv.lhs.size
                    or cm * ck > lv.rhs.size):
                return False
        bm, bn, bk = _base_dims(m, n, k, threshold)
        return (bn * bk <= self.base_acc.size
                and bm * bn <= self.base_lhs.size
                and bm * bk <= self.base_rhs.size)


def workspace_for_calls(calls, threshold: int,
                        extra_base: tuple[int, int, int] = (0, 0, 0),
                        dtype=np.float64) -> StrassenWorkspace:
    """Build one workspace covering every (m, n, k) call in `calls`.

    Per-depth buffer shapes are the elementwise maxima over the calls' ceil
    chains; the base blocks cover the largest base-case call of any entry,
    plus `extra_base` = (accumulator, lhs-stage, rhs-stage) scalars when a
    caller needs bigger naive-kernel scratch of its own.
    """
    depth_dims: list[list[int]] = []
    acc_need, lhs_need, rhs_need = extra_base
    for (m, n, k) in calls:
        for depth, (cm, cn, ck) in enumerate(_chain(m, n, k, threshold)):
            if depth == len(depth_dims):
                depth_dims.append([0, 0, 0])
            slot = depth_dims[depth]
            slot[0] = max(slot[0], cn * ck)
            slot[1] = max(slot[1], cm * cn)
            slot[2] = max(slot[2], cm * ck)
        bm, bn, bk = _base_dims(m, n, k, threshold)
        acc_need = max(acc_need, bn * bk)
        lhs_need = max(lhs_need, bm * bn)
        rhs_need = max(rhs_need, bm * bk)
    levels = []
    for (p, l, r) in depth_dims:
        levels.append(_Level(
            prod=_new_buffer(p, dtype, zero=False),
            lhs=_new_buffer(l, dtype, zero=False),
            rhs=_new_buffer(r, dtype, zero=False)))
    return StrassenWorkspace(levels,
                             _new_buffer(max(acc_need, 1), dtype, zero=False),
                             _new_buffer(max(lhs_need, 1), dtype, zero=False),
                             _new_buffer(max(rhs_need, 1), dtype, zero=False),
                             threshold, dtype)


def workspace_for(m: int, n: int, k: int, threshold: int = DEFAULT_THRESHOLD,
                  dtype=np.float64) -> StrassenWorkspace:
    """Workspace for one fast_strassen call on A (m x n), B (m x k)."""
    if min(m, n, k) < 1 or threshold < 1:
        raise ShapeMismatchError("shape mismatch: dimensions must be >= 1")
    return workspace_for_calls([(m, n, k)], threshold, dtype=dtype)


def _load_combo(dst: np.ndarray, x: np.ndarray, y: np.ndarray | None,
                sign: float) -> np.ndarray:
    """Fill dst with x (+/-) y where the operands may each be one row/column
    short of dst; missing entries count as zero."""
    dst.fill(0)
    add_truncated(dst, x, 1.0)
    if y is not None:
        add_truncated(dst, y, sign)
    return dst


def _strassen_rec(a, b, c, alpha, ws: StrassenWorkspace, threshold, counter,
                  depth) -> None:
    m, n = a.shape
    k = b.shape[1]
    if is_base_case(m, n, k, threshold):
        naive_gemm_atb(ws.stage_operand(a, "lhs"), ws.stage_operand(b, "rhs"),
                       c, alpha, counter, work=ws.base_work(n, k))
        return

    lv = ws.levels[depth]
    m1, n1, k1 = m // 2, n // 2, k // 2
    m2, n2, k2 = m - m1, n - n1, k - k1
    a11, a12, a21, a22 = a[:m1, :n1], a[:m1, n1:], a[m1:, :n1], a[m1:, n1:]
    b11, b12, b21, b22 = b[:m1, :k1], b[:m1, k1:], b[m1:, :k1], b[m1:, k1:]
    c11, c12, c21, c22 = c[:n1, :k1], c[:n1, k1:], c[n1:, :k1], c[n1:, k1:]

    def product(s, t, rows, cols):
        p = lv.take("prod", rows, cols)
        p.fill(0)
        _strassen_rec(s, t, p, alpha, ws, threshold, counter, depth + 1)
        return p

    # The seven sub-products of the 2x2 block scheme, written for the
    # transposed orientation: the (i, j) block of A^T is A_ji^T, so operand
    # combinations live in A-space and the contraction runs over block rows.
    # Each product is built, used, and released before the next one claims
    # the depth-d buffers.

    # P1 = (A11 + A22)^T (B11 + B22) -> C11, C22
    s = _load_combo(lv.take("lhs", m2, n2), a22, a11, 1.0)
    t = _load_combo(lv.take("rhs", m2, k2), b22, b11, 1.0)
    p = product(s, t, n2, k2)
    add_truncated(c11, p)
    add_truncated(c22, p)

    # P2 = (A12 + A22)^T B11 -> C21, -C22   (contraction cut to B11's rows)
    s = _load_combo(lv.take("lhs", m1, n2), a12, a22[:m1], 1.0)
    p = product(s, b11, n2, k1)
    add_truncated(c21, p)
    add_truncated(c22, p, -1.0)

    # P3 = A11^T (B12 - B22) -> C12, C22   (contraction cut to A11's rows)
    t = _load_combo(lv.take("rhs", m1, k2), b12, b22[:m1], -1.0)
    p = product(a11, t, n1, k2)
    add_truncated(c12, p)
    add_truncated(c22, p)

    # P4 = A22^T (B21 - B11) -> C11, C21
    t = _load_combo(lv.take("rhs", m2, k1), b21, b11, -1.0)
    p = product(a22, t, n2, k1)
    add_truncated(c11, p)
    add_truncated(c21, p)

    # P5 = (A11 + A21)^T B22 -> -C11, C12
    s = _load_combo(lv.take("lhs", m2, n1), a21, a11, 1.0)
    p = product(s, b22, n1, k2)
    add_truncated(c11, p, -1.0)
    add_truncated(c12, p)

    # P6 = (A12 - A11)^T (B11 + B12) -> C22
    s = _load_combo(lv.take("lhs", m1, n2), a12, a11, -1.0)
    t = _load_combo(lv.take("rhs", m1, k2), b12, b11, 1.0)
    p = product(s, t, n2, k2)
    add_truncated(c22, p)

    # P7 = (A21 - A22)^T (B21 + B22) -> C11
    s = _load_combo(lv.take("lhs", m2, n2), a21, a22, -1.0)
    t = _load_combo(lv.take("rhs", m2, k2), b22, b21, 1.0)
    p = product(s, t, n2, k2)
    add_truncated(c11, p)


def fast_strassen(A, B, C, alpha=1.0, ws: StrassenWorkspace | None = None,
                  threshold: int = DEFAULT_THRESHOLD,
                  counter: MultCounter | None = None) -> None:
    """C += alpha * A^T B with A (m x n), B (m x k), C (n x k).

    `ws` must cover (m, n, k) at the given threshold; pass None to have a
    workspace allocated for this single call.  alpha is applied only where
    base-case products accumulate, so scaling is exactly linear.
    """
    a, b, c = as_array(A), as_array(B), as_array(C)
    m, n = a.shape
    if b.shape[0] != m:
        raise ShapeMismatchError(f"shape mismatch: A {a.shape} vs B {b.shape}")
    k = b.shape[1]
    if c.shape != (n, k):
        raise ShapeMismatchError(f"shape mismatch: C {c.shape} != {(n, k)}")
    if ws is None:
        ws = workspace_for(m, n, k, threshold, dtype=c.dtype)
    elif not ws.covers(m, n, k, threshold):
        raise WorkspaceUndersizedError(
            f"workspace undersized for ({m},{n},{k}) at threshold {threshold}")
    _strassen_rec(a, b, c, alpha, ws, threshold, counter, 0)


def strassen_mult_count(n: int) -> int:
    """Exact scalar-multiplication count of fast_strassen on square power-of-
    two inputs at threshold 1: seven-fold per halving, so 7**log2(n)."""
    if n < 1 or n & (n - 1):
        raise UnsupportedSizeError(f"unsupported size: {n} is not a power of two")
    return 7 ** (n.bit_length() - 1)
