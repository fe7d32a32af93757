import numpy as np
import pytest

from flocksde import BrownianPath, PathMemoryError, make_brownian_path
from flocksde.brownian import MAX_PATH_ELEMENTS, PathRefinementError


class TestReproducibility:
    def test_same_seed_bit_identical(self):
        a = make_brownian_path(123, 0.01, 500, n_channels=3)
        b = make_brownian_path(123, 0.01, 500, n_channels=3)
        assert np.array_equal(a.increments, b.increments)

    def test_different_seeds_differ(self):
        a = make_brownian_path(1, 0.01, 100)
        b = make_brownian_path(2, 0.01, 100)
        assert not np.array_equal(a.increments, b.increments)

    def test_prefix_stable_in_steps(self):
        short = make_brownian_path(9, 0.01, 50)
        long = make_brownian_path(9, 0.01, 120)
        assert np.array_equal(long.increments[:50], short.increments)

    def test_seed_sequences_with_distinct_spawn_keys_differ(self):
        a = make_brownian_path(np.random.SeedSequence(entropy=5, spawn_key=(0, 1)), 0.01, 64)
        b = make_brownian_path(np.random.SeedSequence(entropy=5, spawn_key=(1, 1)), 0.01, 64)
        assert not np.array_equal(a.increments, b.increments)

    def test_negative_seed_rejected(self):
        with pytest.raises(ValueError):
            make_brownian_path(-1, 0.01, 10)


class TestStatistics:
    def test_increment_variance_clt_band(self):
        # 1e6 N(0, 0.01) samples: the sample variance lands in [0.0097, 0.0103]
        # with overwhelming probability (the 3-sigma band is ~0.01 +- 4e-5)
        path = make_brownian_path(2718, 0.01, 1_000_000)
        var = path.increments.var(ddof=1)
        assert 0.0097 <= var <= 0.0103

    def test_mean_near_zero(self):
        path = make_brownian_path(31, 0.01, 1_000_000)
        assert abs(path.increments.mean()) < 3e-4  # 3 sigma = 3e-4


class TestGrid:
    def test_w_starts_at_zero_and_cumulates(self):
        path = make_brownian_path(4, 0.5, 20, n_channels=2)
        assert path.w.shape == (21, 2)
        assert np.array_equal(path.w[0], [0.0, 0.0])
        np.testing.assert_array_equal(path.w[1:], np.cumsum(path.increments, axis=0))

    def test_w_at_grid_points(self):
        path = make_brownian_path(4, 0.25, 8)
        assert path.w_at(0.0) == 0.0
        assert path.w_at(2.0) == path.w[8, 0]
        np.testing.assert_array_equal(path.w_at([0.25, 1.0]), path.w[[1, 4], 0])

    def test_w_at_off_grid_rejected(self):
        path = make_brownian_path(4, 0.25, 8)
        with pytest.raises(ValueError):
            path.w_at(0.3)

    def test_w_at_outside_horizon_rejected(self):
        path = make_brownian_path(4, 0.25, 8)
        with pytest.raises(ValueError):
            path.w_at(2.25)

    def test_horizon_and_times(self):
        path = make_brownian_path(4, 0.1, 10)
        assert path.horizon == pytest.approx(1.0)
        assert path.times.shape == (11,)

    def test_increments_read_only(self):
        path = make_brownian_path(4, 0.1, 10)
        with pytest.raises(ValueError):
            path.increments[0, 0] = 1.0


class TestRefinement:
    def test_pairwise_sums_exact(self):
        path = make_brownian_path(99, 0.02, 256, n_channels=2, refine_levels=2)
        fine = path.refine()
        finest = fine.refine()
        assert fine.dt == path.dt / 2
        assert fine.n_steps == 2 * path.n_steps
        assert np.array_equal(
            fine.increments.reshape(-1, 2, fine.n_channels).sum(axis=1), path.increments
        )
        assert np.array_equal(
            finest.increments.reshape(-1, 2, finest.n_channels).sum(axis=1), fine.increments
        )

    def test_refined_variance_scales(self):
        path = make_brownian_path(7, 0.01, 100_000, refine_levels=1)
        fine = path.refine()
        assert fine.increments.var(ddof=1) == pytest.approx(0.005, rel=0.02)

    def test_refine_past_declared_depth_rejected(self):
        path = make_brownian_path(7, 0.01, 16)
        with pytest.raises(PathRefinementError):
            path.refine()

    def test_refinement_depth_reproducible(self):
        a = make_brownian_path(55, 0.01, 64, refine_levels=1)
        b = make_brownian_path(55, 0.01, 64, refine_levels=1)
        assert np.array_equal(a.refine().increments, b.refine().increments)


class TestMemoryGuard:
    def test_oversized_request_rejected(self):
        with pytest.raises(PathMemoryError):
            make_brownian_path(0, 1e-3, MAX_PATH_ELEMENTS + 1)

    def test_oversized_refinement_rejected(self):
        with pytest.raises(PathMemoryError):
            make_brownian_path(0, 1e-3, MAX_PATH_ELEMENTS // 2, refine_levels=1)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            make_brownian_path(0, 0.0, 10)
        with pytest.raises(ValueError):
            make_brownian_path(0, 0.1, 0)
        with pytest.raises(ValueError):
            make_brownian_path(0, 0.1, 10, n_channels=0)
