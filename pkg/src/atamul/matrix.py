"""Dense row-major matrices, zero-copy block views, and the portable kernels
every higher layer is built on.

All scalar buffers are contiguous row-major numpy arrays (float32 or float64).
Sub-blocks are expressed as views carrying an explicit row stride, so no
operation in this module ever copies matrix data except the packed-triangle
codec and the file codec, whose whole job is copying.

The two accumulation kernels (`naive_gemm_atb`, `naive_syrk_lower`) share one
inner routine that sums outer products over the contraction index in fixed
ascending order.  That single summation order is what makes results
bit-reproducible across executors and makes the syrk kernel agree exactly with
the gemm kernel on the lower triangle.
"""

from __future__ import annotations

import contextlib
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError, UnsplittableError

SUPPORTED_DTYPES = (np.float32, np.float64)

# ---------------------------------------------------------------------------
# Buffer allocation chokepoint.
#
# Every matrix-sized buffer the package creates goes through _new_buffer so
# tests can assert that a code path performs no allocation.
# ---------------------------------------------------------------------------

_alloc_counter = {"count": 0}


def _new_buffer(shape, dtype, zero=True) -> np.ndarray:
    _alloc_counter["count"] += 1
    if zero:
        return np.zeros(shape, dtype=dtype)
    return np.empty(shape, dtype=dtype)


@contextlib.contextmanager
def count_allocations():
    """Context manager yielding a dict whose 'count' key tracks buffer
    allocations made through the package allocator while the context is open."""
    start = _alloc_counter["count"]
    tracker = {"count": 0}
    try:
        yield tracker
    finally:
        tracker["count"] = _alloc_counter["count"] - start


# ---------------------------------------------------------------------------
# Matrix containers
# ---------------------------------------------------------------------------


class DenseMatrix:
    """A rows x cols matrix in one contiguous row-major buffer."""

    __slots__ = ("a",)

    def __init__(self, array: np.ndarray):
        a = np.asarray(array)
        if a.ndim != 2:
            raise ShapeMismatchError("shape mismatch: DenseMatrix needs a 2-D array")
        if a.shape[0] < 1 or a.shape[1] < 1:
            raise ShapeMismatchError("shape mismatch: rows and cols must be >= 1")
        if a.dtype.type not in SUPPORTED_DTYPES:
            a = a.astype(np.float64)
        if not a.flags.c_contiguous:
            a = np.ascontiguousarray(a)
        self.a = a

    @classmethod
    def zeros(cls, rows: int, cols: int, dtype=np.float64) -> "DenseMatrix":
        return cls(_new_buffer((rows, cols), dtype))

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    @property
    def dtype(self):
        return self.a.dtype

    def view(self, row_offset=0, col_offset=0, rows=None, cols=None) -> "MatrixView":
        rows = self.rows - row_offset if rows is None else rows
        cols = self.cols - col_offset if cols is None else cols
        return MatrixView(self, row_offset, col_offset, rows, cols)

    def copy(self) -> "DenseMatrix":
        return DenseMatrix(self.a.copy())

    def __repr__(self):
        return f"DenseMatrix({self.rows}x{self.cols}, {self.a.dtype})"


class MatrixView:
    """A rectangular window into a DenseMatrix.

    Element (i, j) of the view maps to base element
    (row_offset + i, col_offset + j).  Mutable access to overlapping views is
    forbidden by contract, not by locking.
    """

    __slots__ = ("base", "row_offset", "col_offset", "rows", "cols", "a")

    def __init__(self, base: DenseMatrix, row_offset: int, col_offset: int,
                 rows: int, cols: int):
        if rows < 1 or cols < 1:
            raise ShapeMismatchError("shape mismatch: empty view")
        if row_offset < 0 or col_offset < 0 \
                or row_offset + rows > base.rows or col_offset + cols > base.cols:
            raise ShapeMismatchError("shape mismatch: view exceeds base matrix")
        self.base = base
        self.row_offset = row_offset
        self.col_offset = col_offset
        self.rows = rows
        self.cols = cols
        self.a = base.a[row_offset:row_offset + rows, col_offset:col_offset + cols]

    @property
    def row_stride(self) -> int:
        """Distance in scalars between consecutive view rows."""
        return self.a.strides[0] // self.a.itemsize

    def subview(self, row_offset, col_offset, rows, cols) -> "MatrixView":
        return MatrixView(self.base, self.row_offset + row_offset,
                          self.col_offset + col_offset, rows, cols)

    def overlaps(self, other: "MatrixView") -> bool:
        if self.base is not other.base:
            return False
        return not (self.row_offset + self.rows <= other.row_offset
                    or other.row_offset + other.rows <= self.row_offset
                    or self.col_offset + self.cols <= other.col_offset
                    or other.col_offset + other.cols <= self.col_offset)

    def __repr__(self):
        return (f"MatrixView({self.rows}x{self.cols} at "
                f"({self.row_offset},{self.col_offset}))")


def as_array(x) -> np.ndarray:
    """Accept a MatrixView, DenseMatrix or ndarray and return the 2-D array."""
    if isinstance(x, (MatrixView, DenseMatrix)):
        return x.a
    a = np.asarray(x)
    if a.ndim != 2:
        raise ShapeMismatchError("shape mismatch: expected a 2-D operand")
    return a


# ---------------------------------------------------------------------------
# Multiplication counter
# ---------------------------------------------------------------------------


@dataclass
class MultCounter:
    """Counts scalar multiplications executed by base-case kernels.

    The count is credited in bulk per kernel call (m*n*k for gemm,
    m*n*(n+1)/2 for syrk), matching what a scalar-loop implementation would
    execute.  Disabling the counter never changes arithmetic results.
    """

    scalar_mults: int = 0
    enabled: bool = True

    def add(self, k: int) -> None:
        if self.enabled:
            self.scalar_mults += k

    def reset(self) -> None:
        self.scalar_mults = 0


# ---------------------------------------------------------------------------
# Block splitting and truncated addition
# ---------------------------------------------------------------------------


def split4(A):
    """Split a block into its four floor/ceil quadrants.

    For an m x n block the quadrants are
    A11: (m//2, n//2) at (0, 0),     A12: (m//2, ceil(n/2)) at (0, n//2),
    A21: (ceil(m/2), n//2) at (m//2, 0), A22 at (m//2, n//2).
    They are pairwise disjoint and tile the block exactly.
    """
    if isinstance(A, MatrixView):
        m, n = A.rows, A.cols
        if m < 2 or n < 2:
            raise UnsplittableError("unsplittable: block needs >= 2 rows and cols")
        m1, n1 = m // 2, n // 2
        return (A.subview(0, 0, m1, n1),
                A.subview(0, n1, m1, n - n1),
                A.subview(m1, 0, m - m1, n1),
                A.subview(m1, n1, m - m1, n - n1))
    a = as_array(A)
    m, n = a.shape
    if m < 2 or n < 2:
        raise UnsplittableError("unsplittable: block needs >= 2 rows and cols")
    m1, n1 = m // 2, n // 2
    return a[:m1, :n1], a[:m1, n1:], a[m1:, :n1], a[m1:, n1:]


def add_truncated(dst, src, scale=1.0) -> None:
    """dst[i, j] += scale * src[i, j] over the overlapping top-left rectangle.

    Shapes may differ by at most one row and one column; excess rows/columns
    of src are ignored and missing ones are treated as zero, which is exactly
    the zero-padding trick that lets odd-sized blocks combine without
    materialising padded copies.
    """
    d, s = as_array(dst), as_array(src)
    if abs(d.shape[0] - s.shape[0]) > 1 or abs(d.shape[1] - s.shape[1]) > 1:
        raise ShapeMismatchError(
            f"shape mismatch: add_truncated {d.shape} vs {s.shape}")
    r = min(d.shape[0], s.shape[0])
    c = min(d.shape[1], s.shape[1])
    dv = d[:r, :c]
    sv = s[:r, :c]
    if scale == 1.0:
        np.add(dv, sv, out=dv)
    elif scale == -1.0:
        np.subtract(dv, sv, out=dv)
    else:
        dv += scale * sv


# ---------------------------------------------------------------------------
# Base-case kernels
# ---------------------------------------------------------------------------


def _accumulate_atb(a: np.ndarray, b: np.ndarray, acc: np.ndarray) -> None:
    """acc = a^T b, summing over rows of a/b in ascending order.

    One einsum call keeps the interpreter lock released for the whole
    contraction, which is what lets worker threads scale.  For every
    non-scalar output its two-operand path performs the same ascending
    linear reduction as an explicit outer-product loop (the pure dot shape
    reduces in a different, still deterministic, order); the test suite pins
    this down bit for bit.
    """
    np.einsum("li,lj->ij", a, b, out=acc)


def _kernel_work(n: int, k: int, dtype, work):
    """Return an (n, k) accumulator block, from `work` when provided."""
    if work is not None:
        if work.shape[0] < n or work.shape[1] < k:
            raise ShapeMismatchError("shape mismatch: kernel scratch too small")
        return work[:n, :k]
    return _new_buffer((n, k), dtype, zero=False)


def naive_gemm_atb(A, B, C, alpha=1.0, counter: MultCounter | None = None,
                   work=None) -> None:
    """C += alpha * A^T B with A (m x n), B (m x k), C (n x k).

    Credits m*n*k scalar multiplications to the counter.
    """
    a, b, c = as_array(A), as_array(B), as_array(C)
    m, n = a.shape
    if b.shape[0] != m:
        raise ShapeMismatchError(
            f"shape mismatch: A is {a.shape}, B is {b.shape}")
    k = b.shape[1]
    if c.shape != (n, k):
        raise ShapeMismatchError(
            f"shape mismatch: C is {c.shape}, expected {(n, k)}")
    acc = _kernel_work(n, k, c.dtype, work)
    _accumulate_atb(a, b, acc)
    np.multiply(acc, c.dtype.type(alpha), out=acc)
    np.add(c, acc, out=c)
    if counter is not None:
        counter.add(m * n * k)


def naive_syrk_lower(A, C, alpha=1.0, counter: MultCounter | None = None,
                     work=None) -> None:
    """Lower triangle of C += alpha * A^T A with A (m x n), C (n x n).

    The strict upper triangle of C is never read or written.  Credits
    m*n*(n+1)/2 scalar multiplications.  The lower-triangle values agree
    bit for bit with naive_gemm_atb(A, A, C) because both kernels share the
    same ordered accumulation.
    """
    a, c = as_array(A), as_array(C)
    m, n = a.shape
    if c.shape != (n, n):
        raise ShapeMismatchError(
            f"shape mismatch: C is {c.shape}, expected {(n, n)}")
    acc = _kernel_work(n, n, c.dtype, work)
    _accumulate_atb(a, a, acc)
    np.multiply(acc, c.dtype.type(alpha), out=acc)
    np.add(c, acc, out=c, where=_tril_mask(n))
    if counter is not None:
        counter.add(m * n * (n + 1) // 2)


# ---------------------------------------------------------------------------
# Packed lower-triangular codec
# ---------------------------------------------------------------------------


@dataclass
class PackedLowerTriangular:
    """The n*(n+1)/2 lower-triangle entries of a square block, rows
    concatenated: row i contributes entries (i, 0..i)."""

    n: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.data.shape != (self.n * (self.n + 1) // 2,):
            raise ShapeMismatchError(
                f"shape mismatch: packed length {self.data.shape} for n={self.n}")


_tril_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}
_tril_mask_cache: dict[int, np.ndarray] = {}


def _tril_indices(n: int):
    idx = _tril_cache.get(n)
    if idx is None:
        idx = np.tril_indices(n)
        _tril_cache[n] = idx
    return idx


def _tril_mask(n: int) -> np.ndarray:
    mask = _tril_mask_cache.get(n)
    if mask is None:
        mask = np.tril(np.ones((n, n), dtype=bool))
        _tril_mask_cache[n] = mask
    return mask


def pack_lower(C) -> PackedLowerTriangular:
    """Copy the lower triangle of square C into packed row-major form."""
    c = as_array(C)
    n = c.shape[0]
    if c.shape[1] != n:
        raise ShapeMismatchError("shape mismatch: pack_lower needs a square block")
    il, jl = _tril_indices(n)
    return PackedLowerTriangular(n, c[il, jl].copy())


def unpack_lower(p: PackedLowerTriangular, C) -> None:
    """Write the packed entries back into the lower triangle of square C."""
    c = as_array(C)
    n = c.shape[0]
    if c.shape[1] != n or n != p.n:
        raise ShapeMismatchError("shape mismatch: unpack_lower target")
    il, jl = _tril_indices(n)
    c[il, jl] = p.data


def mirror_lower_to_upper(C) -> None:
    """Set C[i, j] = C[j, i] for i < j, leaving the lower triangle alone."""
    c = as_array(C)
    n = c.shape[0]
    if c.shape[1] != n:
        raise ShapeMismatchError("shape mismatch: mirror needs a square block")
    iu, ju = np.triu_indices(n, 1)
    c[iu, ju] = c[ju, iu]


# ---------------------------------------------------------------------------
# Binary matrix file format
#
# magic "ATAM", then three unsigned 8-byte little-endian integers
# (rows, cols, scalar width in bytes: 4 or 8), then rows*cols scalars,
# row-major, little-endian.
# ---------------------------------------------------------------------------

_MAGIC = b"ATAM"


def write_matrix(path, M) -> None:
    a = as_array(M)
    width = a.itemsize
    if width not in (4, 8):
        raise ShapeMismatchError("shape mismatch: only f32/f64 matrices supported")
    kind = "<f4" if width == 4 else "<f8"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQQ", a.shape[0], a.shape[1], width))
        fh.write(np.ascontiguousarray(a, dtype=kind).tobytes())


def read_matrix(path) -> DenseMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not an ATAM file: bad magic {magic!r}")
        rows, cols, width = struct.unpack("<QQQ", fh.read(24))
        if width not in (4, 8):
            raise ValueError(f"bad ATAM scalar width {width}")
        kind = "<f4" if width == 4 else "<f8"
        payload = fh.read(rows * cols * width)
    data = np.frombuffer(payload, dtype=kind).reshape(rows, cols)
    return DenseMatrix(data.astype(np.float32 if width == 4 else np.float64))
