import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import gram_oracle

from atamul.ata import ata, ata_full, ata_mult_count, workspace_for_ata
from atamul.errors import (ShapeMismatchError, UnsupportedSizeError,
                           WorkspaceUndersizedError)
from atamul.matrix import MultCounter
from atamul.strassen import strassen_mult_count


class TestAta:
    def test_one_by_one(self):
        c = np.zeros((1, 1))
        ata(np.array([[2.0]]), c, 1.0, threshold=4)
        assert c[0, 0] == 4.0

    def test_small_rectangular_oracle(self, rng):
        a = rng.uniform(-1, 1, (6, 4))
        c = np.zeros((4, 4))
        ata(a, c, 1.0, threshold=1)
        ref = gram_oracle(a)
        il, jl = np.tril_indices(4)
        rel = np.linalg.norm(c[il, jl] - ref[il, jl]) / np.linalg.norm(ref[il, jl])
        assert rel < 1e-10

    def test_exact_count_n4(self, rng):
        cnt = MultCounter()
        a = rng.uniform(-1, 1, (4, 4))
        ata(a, np.zeros((4, 4)), 1.0, threshold=1, counter=cnt)
        assert cnt.scalar_mults == 38

    @pytest.mark.parametrize("n", [1, 2, 4, 8, 16, 32])
    def test_exact_count_matches_oracle(self, n, rng):
        cnt = MultCounter()
        a = rng.uniform(-1, 1, (n, n))
        ata(a, np.zeros((n, n)), 1.0, threshold=1, counter=cnt)
        assert cnt.scalar_mults == ata_mult_count(n)

    def test_count_ratio_converges_from_above(self):
        ratios = [ata_mult_count(2 ** j) / strassen_mult_count(2 ** j)
                  for j in range(1, 6)]
        assert all(r > 2 / 3 for r in ratios)
        assert all(a > b for a, b in zip(ratios, ratios[1:]))
        assert 0.667 <= ratios[-1] <= 0.70

    def test_upper_triangle_untouched(self, rng):
        a = rng.uniform(-1, 1, (12, 9))
        c = np.zeros((9, 9))
        sentinel = 1.2345e67
        c[np.triu_indices(9, 1)] = sentinel
        ata(a, c, 1.0, threshold=4)
        assert np.all(c[np.triu_indices(9, 1)] == sentinel)

    @given(m=st.integers(1, 64), n=st.integers(1, 64),
           seed=st.integers(0, 2 ** 16))
    @settings(max_examples=60)
    def test_oracle_equivalence_sweep(self, m, n, seed):
        r = np.random.default_rng(seed)
        a = r.uniform(-1, 1, (m, n))
        got = ata_full(a, threshold=16)
        assert np.abs(got.a - gram_oracle(a)).max() <= 1e-9 * m

    @pytest.mark.parametrize("shape", [(512, 32), (300, 17)])
    def test_tall_oracle(self, shape, rng):
        a = rng.uniform(-1, 1, shape)
        got = ata_full(a, threshold=512)
        assert np.abs(got.a - gram_oracle(a)).max() <= 1e-9 * shape[0]

    def test_threshold_independence(self, rng):
        a = rng.uniform(-1, 1, (50, 37))
        results = [ata_full(a, threshold=t).a for t in (1, 64, 4096)]
        ref = gram_oracle(a)
        for r in results:
            assert np.abs(r - ref).max() <= 1e-9 * 50

    def test_positive_semidefinite_structure(self, rng):
        a = rng.uniform(-1, 1, (40, 25))
        c = ata_full(a, threshold=32).a
        assert np.all(np.diag(c) >= 0)
        # every 2x2 principal minor is nonnegative up to rounding
        d = np.diag(c)
        minors = d[:, None] * d[None, :] - c ** 2
        assert minors.min() >= -1e-9 * 40

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            ata(np.zeros((4, 3)), np.zeros((4, 4)))

    def test_workspace_undersized(self):
        ws = workspace_for_ata(8, 8, threshold=64)
        with pytest.raises(WorkspaceUndersizedError):
            ata(np.zeros((64, 64)), np.zeros((64, 64)), 1.0, threshold=64,
                ws=ws)


class TestAtaFull:
    def test_identity(self):
        got = ata_full(np.eye(5), threshold=4)
        assert np.allclose(got.a, np.eye(5), atol=1e-12)

    def test_row_vector_outer_product(self, rng):
        v = rng.uniform(-1, 1, (1, 8))
        got = ata_full(v, threshold=4)
        assert np.allclose(got.a, v.T @ v, atol=1e-12)
        assert np.linalg.matrix_rank(got.a) == 1

    def test_symmetry_exact(self, rng):
        a = rng.uniform(-1, 1, (33, 21))
        c = ata_full(a, threshold=8).a
        assert np.array_equal(c, c.T)

    def test_float32(self, rng):
        a = rng.uniform(-1, 1, (100, 80)).astype(np.float32)
        c = ata_full(a, threshold=64)
        assert c.a.dtype == np.float32
        ref = gram_oracle(a.astype(np.float64))
        assert np.abs(c.a - ref).max() <= 1e-4 * 100


class TestAtaMultCount:
    def test_values(self):
        assert ata_mult_count(1) == 1
        assert ata_mult_count(2) == 6
        assert ata_mult_count(16) == 1686

    def test_always_integer(self):
        for j in range(0, 12):
            n = 2 ** j
            assert (2 * 7 ** j + 4 ** j) % 3 == 0
            assert ata_mult_count(n) == (2 * 7 ** j + 4 ** j) // 3

    def test_non_power_of_two(self):
        with pytest.raises(UnsupportedSizeError):
            ata_mult_count(12)
