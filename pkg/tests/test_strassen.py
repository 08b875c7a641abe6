import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from atamul.errors import (ShapeMismatchError, UnsupportedSizeError,
                           WorkspaceUndersizedError)
from atamul.matrix import MultCounter, count_allocations, naive_gemm_atb
from atamul.strassen import (fast_strassen, is_base_case,
                             strassen_mult_count, workspace_for)


def reference_atb(a, b):
    c = np.zeros((a.shape[1], b.shape[1]), dtype=a.dtype)
    naive_gemm_atb(a, b, c, 1.0)
    return c


class TestFastStrassen:
    def test_identity_operand(self, rng):
        b = rng.uniform(-1, 1, (4, 4))
        c = np.zeros((4, 4))
        fast_strassen(np.eye(4), b, c, 1.0, workspace_for(4, 4, 4, 1),
                      threshold=1)
        assert np.allclose(c, b, atol=1e-12)

    def test_odd_sizes_against_oracle(self, rng):
        a = rng.uniform(-1, 1, (7, 5))
        b = rng.uniform(-1, 1, (7, 6))
        c = np.zeros((5, 6))
        fast_strassen(a, b, c, 1.0, workspace_for(7, 5, 6, 1), threshold=1)
        ref = reference_atb(a, b)
        rel = np.linalg.norm(c - ref) / np.linalg.norm(ref)
        assert rel < 1e-10

    def test_accumulates_into_c(self, rng):
        a = rng.uniform(-1, 1, (6, 4))
        b = rng.uniform(-1, 1, (6, 3))
        c = rng.uniform(-1, 1, (4, 3))
        expected = c + reference_atb(a, b)
        fast_strassen(a, b, c, 1.0, workspace_for(6, 4, 3, 8), threshold=8)
        assert np.allclose(c, expected, atol=1e-12)

    def test_seven_mults_at_two(self, rng):
        cnt = MultCounter()
        c = np.zeros((2, 2))
        fast_strassen(rng.normal(size=(2, 2)), rng.normal(size=(2, 2)), c,
                      1.0, workspace_for(2, 2, 2, 1), 1, cnt)
        assert cnt.scalar_mults == 7

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32])
    def test_power_of_two_counts(self, n, rng):
        cnt = MultCounter()
        c = np.zeros((n, n))
        fast_strassen(rng.normal(size=(n, n)), rng.normal(size=(n, n)), c,
                      1.0, workspace_for(n, n, n, 1), 1, cnt)
        assert cnt.scalar_mults == strassen_mult_count(n)

    @given(m=st.integers(1, 64), n=st.integers(1, 64), k=st.integers(1, 64),
           seed=st.integers(0, 2 ** 16))
    @settings(max_examples=60)
    def test_oracle_equivalence_sweep(self, m, n, k, seed):
        r = np.random.default_rng(seed)
        a = r.uniform(-1, 1, (m, n))
        b = r.uniform(-1, 1, (m, k))
        c = np.zeros((n, k))
        fast_strassen(a, b, c, 1.0, workspace_for(m, n, k, 16), threshold=16)
        ref = reference_atb(a, b)
        assert np.abs(c - ref).max() <= 1e-9 * m

    def test_alpha_linearity_exact(self, rng):
        a = rng.uniform(-1, 1, (9, 6))
        b = rng.uniform(-1, 1, (9, 7))
        ws = workspace_for(9, 6, 7, 4)
        c1 = np.zeros((6, 7))
        c2 = np.zeros((6, 7))
        fast_strassen(a, b, c1, 1.0, ws, threshold=4)
        fast_strassen(a, b, c2, 2.0, ws, threshold=4)
        assert np.array_equal(c2, 2.0 * c1)

    def test_zero_allocation_after_workspace(self, rng):
        a = rng.uniform(-1, 1, (32, 32))
        b = rng.uniform(-1, 1, (32, 32))
        c = np.zeros((32, 32))
        ws = workspace_for(32, 32, 32, 8)
        fast_strassen(a, b, c, 1.0, ws, threshold=8)   # warm caches
        c[:] = 0
        with count_allocations() as tracker:
            fast_strassen(a, b, c, 1.0, ws, threshold=8)
        assert tracker["count"] == 0

    def test_shape_mismatch(self):
        ws = workspace_for(4, 4, 4)
        with pytest.raises(ShapeMismatchError):
            fast_strassen(np.zeros((4, 4)), np.zeros((3, 4)), np.zeros((4, 4)),
                          1.0, ws)
        with pytest.raises(ShapeMismatchError):
            fast_strassen(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((3, 4)),
                          1.0, ws)

    def test_workspace_undersized(self):
        ws = workspace_for(8, 8, 8, threshold=32)
        with pytest.raises(WorkspaceUndersizedError):
            fast_strassen(np.zeros((8, 8)), np.zeros((8, 8)),
                          np.zeros((8, 8)), 1.0, ws, threshold=1)
        # A thin contraction hits the base case immediately with a big block;
        # a workspace built for a cube the same size cannot serve it.
        ws = workspace_for(64, 64, 64, threshold=1)
        with pytest.raises(WorkspaceUndersizedError):
            fast_strassen(np.zeros((1, 64)), np.zeros((1, 64)),
                          np.zeros((64, 64)), 1.0, ws, threshold=1)

    def test_determinism(self, rng):
        a = rng.uniform(-1, 1, (23, 17))
        b = rng.uniform(-1, 1, (23, 19))
        ws = workspace_for(23, 17, 19, 8)
        c1 = np.zeros((17, 19))
        c2 = np.zeros((17, 19))
        fast_strassen(a, b, c1, 1.0, ws, threshold=8)
        fast_strassen(a, b, c2, 1.0, ws, threshold=8)
        assert np.array_equal(c1, c2)


class TestWorkspace:
    def test_trivial_sizes(self):
        ws = workspace_for(1, 1, 1, threshold=1)
        assert len(ws.levels) == 0

    @pytest.mark.parametrize("n", [16, 64, 256])
    def test_space_bound(self, n):
        ws = workspace_for(n, n, n, threshold=1)
        assert ws.total_scalars <= 1.5 * n * n

    def test_level_sizes_8_8_8(self):
        # Halving chain for an 8-cube at threshold 2: (4,4,4), (2,2,2) and
        # the final (1,1,1) product level; each level holds one product, one
        # left-operand sum and one right-operand sum.
        ws = workspace_for(8, 8, 8, threshold=2)
        sizes = [(lv.prod.size, lv.lhs.size, lv.rhs.size) for lv in ws.levels]
        assert sizes == [(16, 16, 16), (4, 4, 4), (1, 1, 1)]

    def test_covers_smaller_cubes(self):
        ws = workspace_for(32, 32, 32, threshold=4)
        assert ws.covers(32, 32, 32, 4)
        assert ws.covers(16, 16, 16, 4)
        assert not ws.covers(33, 32, 32, 4)
        # A thin contraction dimension reaches the base case while the block
        # is still large, so a big-cube workspace does not serve it; covers()
        # is what detects that before any buffer is touched.
        assert not ws.covers(16, 20, 9, 4)
        assert workspace_for(16, 20, 9, 4).covers(16, 20, 9, 4)

    def test_base_case_predicate(self):
        assert is_base_case(1, 100, 100, 1)
        assert is_base_case(4, 4, 4, 32)
        assert not is_base_case(4, 4, 4, 31)


class TestMultCountOracle:
    def test_values(self):
        assert strassen_mult_count(1) == 1
        assert strassen_mult_count(2) == 7
        assert strassen_mult_count(8) == 343

    def test_non_power_of_two(self):
        with pytest.raises(UnsupportedSizeError):
            strassen_mult_count(6)
