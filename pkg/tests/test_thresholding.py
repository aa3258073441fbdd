"""Hard thresholding of coordinates and the split-based level selection."""

from __future__ import annotations

import numpy as np
import pytest

from ubcov import (
    Partition,
    estimate_from_data,
    estimate_large_k,
    frobenius_ub,
    hard_threshold_theta,
    is_positive_definite,
    make_uniform_block,
    sample_mvn,
    select_lambda,
)
from ubcov.thresholding import ThresholdConfig, lambda_grid_from_coords


def coords1(a, b):
    return make_uniform_block([a], [[b]], Partition((2,)))


class TestHardThreshold:
    def test_zero_level_is_identity(self, rng):
        part = Partition((2, 3))
        m = make_uniform_block(rng.normal(size=2), rng.normal(size=(2, 2)), part)
        out = hard_threshold_theta(m, 0.0)
        assert np.array_equal(out.a, m.a)
        assert np.array_equal(out.b, m.b)

    def test_indicator_arithmetic(self):
        m = coords1(0.5, -1.69)
        out = hard_threshold_theta(m, 1.0)
        assert out.a[0] == 0.0
        assert out.b[0, 0] == -1.69

    def test_all_below_level(self):
        part = Partition((2, 2))
        m = make_uniform_block([0.1, -0.2], [[0.05, -0.1], [-0.1, 0.3]], part)
        out = hard_threshold_theta(m, 0.5)
        assert np.all(out.a == 0.0) and np.all(out.b == 0.0)

    def test_negative_level_rejected(self):
        with pytest.raises(ValueError):
            hard_threshold_theta(coords1(1.0, 1.0), -0.1)

    def test_exempt_diagonal(self):
        m = coords1(0.5, 0.4)
        out = hard_threshold_theta(m, 1.0, exempt_diagonal=True)
        assert out.a[0] == 0.5
        assert out.b[0, 0] == 0.0

    def test_monotone_sparsity(self, rng):
        part = Partition((2, 3, 2, 4))
        m = make_uniform_block(rng.normal(size=4), rng.normal(size=(4, 4)), part)
        grid = np.linspace(0.0, 3.0, 30)
        kept = []
        for lam in grid:
            out = hard_threshold_theta(m, float(lam))
            kept.append(np.count_nonzero(out.a) + np.count_nonzero(out.b[np.triu_indices(4)]))
        assert all(k2 <= k1 for k1, k2 in zip(kept, kept[1:]))

    def test_idempotent(self, rng):
        part = Partition((3, 2))
        m = make_uniform_block(rng.normal(size=2), rng.normal(size=(2, 2)), part)
        once = hard_threshold_theta(m, 0.7)
        twice = hard_threshold_theta(once, 0.7)
        assert np.array_equal(once.a, twice.a)
        assert np.array_equal(once.b, twice.b)


class TestConfig:
    def test_exactly_one_mode(self):
        with pytest.raises(ValueError):
            ThresholdConfig()
        with pytest.raises(ValueError):
            ThresholdConfig(lam=0.1, auto=True)
        ThresholdConfig(lam=0.1)
        ThresholdConfig(c_constant=2.0)
        ThresholdConfig(auto=True)

    def test_invalid_values(self):
        with pytest.raises(ValueError):
            ThresholdConfig(lam=-1.0)
        with pytest.raises(ValueError):
            ThresholdConfig(auto=True, splits=0)
        with pytest.raises(ValueError):
            ThresholdConfig(auto=True, grid_size=1)


class TestSelection:
    def _data(self, seed=3, n=40):
        part = Partition((3,) * 4)
        truth = make_uniform_block(
            [1.0, 1.2, 0.9, 1.1],
            np.array([
                [0.5, 0.4, 0.0, 0.0],
                [0.4, 0.6, 0.0, 0.0],
                [0.0, 0.0, 0.5, 0.0],
                [0.0, 0.0, 0.0, 0.4],
            ]),
            part,
        )
        return sample_mvn(n, truth, seed=seed), part

    def test_deterministic(self):
        x, part = self._data()
        cfg = ThresholdConfig(auto=True, splits=10, grid_size=10, seed=42)
        s1 = select_lambda(x, part, cfg)
        s2 = select_lambda(x, part, cfg)
        assert s1.lam == s2.lam
        assert np.array_equal(s1.risks, s2.risks)

    def test_two_point_grid_picks_smaller_risk(self):
        x, part = self._data()
        cfg = ThresholdConfig(auto=True, splits=5, grid=(0.0, 1e12))
        sel = select_lambda(x, part, cfg)
        assert sel.grid.tolist() == [0.0, 1e12]
        expected = sel.grid[int(np.nonzero(sel.risks == sel.risks.min())[0][-1])]
        assert sel.lam == expected

    def test_needs_enough_rows(self):
        part = Partition((2, 2))
        with pytest.raises(ValueError):
            select_lambda(np.zeros((3, 4)), part, ThresholdConfig(auto=True))

    def test_kills_pure_noise_couplings(self):
        # diagonal truth: every off-diagonal block estimate is noise
        part = Partition((3,) * 10)
        gen = np.random.default_rng(5)
        truth = make_uniform_block(gen.uniform(0.8, 1.2, 10), np.zeros((10, 10)), part)
        wins = 0
        for seed in range(100):
            x = sample_mvn(30, truth, seed=seed)
            sel = select_lambda(x, part, ThresholdConfig(auto=True, splits=20, seed=seed))
            theta = estimate_from_data(x, part)
            off = np.abs(theta.coords.b[~np.eye(10, dtype=bool)]).max()
            wins += sel.lam > off
        assert wins >= 80

    def test_keeps_strong_signal(self):
        part = Partition((4,) * 5)
        b = np.array([
            [0.9, 0.5, -0.6, 0.45, 0.7],
            [0.5, 1.0, 0.55, -0.5, 0.6],
            [-0.6, 0.55, 0.8, 0.65, -0.45],
            [0.45, -0.5, 0.65, 0.9, 0.5],
            [0.7, 0.6, -0.45, 0.5, 1.1],
        ])
        truth = make_uniform_block(np.full(5, 3.77), b, part)
        assert is_positive_definite(truth).is_pd
        min_b = np.abs(b[np.abs(b) > 0]).min()
        wins = 0
        for seed in range(100):
            x = sample_mvn(60, truth, seed=seed + 1000)
            sel = select_lambda(x, part, ThresholdConfig(auto=True, splits=20, seed=seed))
            wins += sel.lam < min_b
        assert wins >= 80

    def test_oracle_level_beats_raw_when_sparse(self):
        part = Partition((3,) * 8)
        gen = np.random.default_rng(9)
        b = np.zeros((8, 8))
        b[0, 1] = b[1, 0] = 0.7
        b[2, 3] = b[3, 2] = -0.6
        b[4, 5] = b[5, 4] = 0.65
        np.fill_diagonal(b, 0.5)
        truth = make_uniform_block(gen.uniform(0.8, 1.2, 8), b, part)
        better = 0
        for seed in range(200):
            x = sample_mvn(40, truth, seed=seed + 2000)
            theta = estimate_from_data(x, part)
            grid = lambda_grid_from_coords(theta.coords, 20)
            raw = frobenius_ub(theta.coords, truth)
            best = min(
                frobenius_ub(hard_threshold_theta(theta, float(lam)), truth) for lam in grid
            )
            better += best < raw
        assert better >= 0.70 * 200


class TestLargeKPipeline:
    def test_scenario2_shape(self):
        from ubcov import scenario2_coords

        truth = scenario2_coords(30, 10, seed=0)
        x = sample_mvn(30, truth, seed=1)
        result = estimate_large_k(
            x, truth.partition, ThresholdConfig(auto=True, splits=5, grid_size=8, seed=1)
        )
        assert result.coords.partition.total == 300
        assert result.lam > 0
        assert result.selection is not None
        assert 0 <= result.kept_b_upper <= 30 * 31 // 2

    def test_zero_level_equals_raw_pipeline(self):
        part = Partition((3, 3))
        x = sample_mvn(20, make_uniform_block([1.0, 1.0], np.eye(2) * 0.3, part), seed=4)
        result = estimate_large_k(x, part, ThresholdConfig(lam=0.0))
        theta = estimate_from_data(x, part)
        assert np.array_equal(result.coords.a, theta.coords.a)
        assert np.array_equal(result.coords.b, theta.coords.b)

    def test_rate_constant_mode(self):
        part = Partition((3, 3, 3))
        truth = make_uniform_block([1.0, 1.0, 1.0], np.eye(3) * 0.3, part)
        x = sample_mvn(25, truth, seed=6)
        result = estimate_large_k(x, part, ThresholdConfig(c_constant=1.0))
        assert result.lam == pytest.approx(np.sqrt(np.log(3) / 25))
