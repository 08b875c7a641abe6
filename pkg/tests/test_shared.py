import numpy as np
import pytest

from conftest import gram_oracle

from atamul.ata import ata_full
from atamul.errors import TooManyWorkersError
from atamul.scheduler import covered_mask, leaf_task, levels_shared
from atamul.shared import MAX_WORKERS, SharedRunner, ata_s


class TestAtaS:
    def test_single_worker_bit_exact_vs_sequential(self, rng):
        a = rng.uniform(-1, 1, (60, 48))
        assert np.array_equal(ata_s(a, 1, threshold=64).a,
                              ata_full(a, threshold=64).a)

    @pytest.mark.parametrize("procs", [1, 2, 3, 4, 6, 8, 16])
    def test_oracle_equivalence(self, procs, rng):
        for shape in [(64, 64), (100, 100), (129, 65)]:
            a = rng.uniform(-1, 1, shape)
            got = ata_s(a, procs, threshold=256)
            assert np.abs(got.a - gram_oracle(a)).max() <= 1e-9 * shape[0]

    def test_tall_input(self, rng):
        a = rng.uniform(-1, 1, (512, 64))
        got = ata_s(a, 8, threshold=1024)
        assert np.abs(got.a - gram_oracle(a)).max() <= 1e-9 * 512

    def test_run_to_run_determinism(self, rng):
        a = rng.uniform(-1, 1, (96, 96))
        first = ata_s(a, 4, threshold=128).a
        for _ in range(3):
            assert np.array_equal(ata_s(a, 4, threshold=128).a, first)

    @pytest.mark.parametrize("procs", [4, 16])
    def test_no_out_of_region_writes(self, procs, rng):
        # Fill the output with a sentinel, run without mirroring, and check
        # that every cell outside the leaves' own regions is bit-identical
        # afterwards.  A zero-initialised run checks the covered cells hold
        # the exact lower triangle.
        a = rng.uniform(-1, 1, (64, 64))
        sentinel = 1.2345e67
        c = np.full((64, 64), sentinel)
        runner = SharedRunner(a, procs, threshold=128)
        runner.prepare()
        runner.run_into(c, mirror=False)
        owned = np.zeros((64, 64), dtype=bool)
        for p in range(procs):
            owned |= covered_mask(leaf_task(runner.tree, p), 64)
        assert np.all(c[~owned] == sentinel)
        z = np.zeros((64, 64))
        runner.run_into(z, mirror=False)
        ref = gram_oracle(a)
        assert np.abs(z[owned] - ref[owned]).max() <= 1e-9 * 64
        assert np.all(z[~owned] == 0)

    def test_too_many_workers(self, rng):
        with pytest.raises(TooManyWorkersError):
            ata_s(rng.uniform(-1, 1, (4, 4)), MAX_WORKERS + 1)

    def test_work_scaling_with_levels(self, rng):
        # The biggest per-worker share shrinks as the tree gains levels; end
        # to end the shrink tracks the fourfold-per-level model within the
        # tolerance the incomplete bunches leave.  (Each worker's count is
        # exact, so this doubles as a no-lost-work check.)
        a = rng.uniform(-1, 1, (256, 256))
        max_counts = {}
        totals = {}
        for procs in (1, 4, 16):
            runner = SharedRunner(a, procs, threshold=64, count_mults=True)
            runner.prepare()
            runner.run()
            per_worker = [c.scalar_mults for c in runner.counters]
            max_counts[procs] = max(per_worker)
            totals[procs] = sum(per_worker)
        assert max_counts[1] > max_counts[4] > max_counts[16]
        # levels go 0 -> 2 across the sweep; 4**2 = 16x ideal shrink
        shrink = max_counts[1] / max_counts[16]
        ideal = 4.0 ** (levels_shared(16) - levels_shared(1))
        assert 0.75 * ideal <= shrink <= 1.25 * ideal
        # per-worker shares stay near the even split at every P
        for procs in (4, 16):
            assert max_counts[procs] <= 1.3 * totals[procs] / procs

    def test_result_is_symmetric(self, rng):
        a = rng.uniform(-1, 1, (70, 41))
        c = ata_s(a, 6, threshold=64).a
        assert np.array_equal(c, c.T)
