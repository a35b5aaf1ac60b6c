import numpy as np
import pytest

from unifi.errors import ArgError, DegenerateError
from unifi.metrics import compute_acv, compute_mr, compute_scv, masked_acv


def oracle_mr(timestamps, duration, bin_us):
    """Brute-force bin enumeration, independent of the production path."""
    n_bins = duration // bin_us
    empty = 0
    for b in range(n_bins):
        lo, hi = b * bin_us, (b + 1) * bin_us
        if not any(lo <= t < hi for t in timestamps):
            empty += 1
    return empty / n_bins


def oracle_scv(timestamps):
    dt = [b - a for a, b in zip(timestamps, timestamps[1:])]
    mean = sum(dt) / len(dt)
    var = sum((d - mean) ** 2 for d in dt) / len(dt)
    return var ** 0.5 / mean


class TestComputeMr:
    def test_full_grid_is_zero(self):
        ts = list(range(0, 1_000_000, 10_000))
        assert compute_mr(ts, 1_000_000) == 0.0

    def test_three_of_ten_bins_occupied(self):
        # 5, 25, 95 ms over 100 ms: bins 0, 2, 9 occupied -> 7 empty
        assert compute_mr([5_000, 25_000, 95_000], 100_000) == 0.7

    def test_empty_is_one(self):
        assert compute_mr([], 1_000_000) == 1.0

    def test_tail_remainder_ignored(self):
        # 105 ms -> 10 bins; a packet in the 5 ms tail does not count
        assert compute_mr([101_000], 105_000) == pytest.approx(1.0)

    def test_duration_shorter_than_bin_rejected(self):
        with pytest.raises(ArgError):
            compute_mr([0], 5_000)

    def test_out_of_range_timestamp_rejected(self):
        with pytest.raises(ArgError):
            compute_mr([100_000], 100_000)

    def test_matches_oracle_on_random_sets(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            duration = int(rng.integers(5, 40)) * 10_000
            n = int(rng.integers(0, 60))
            ts = np.unique(rng.integers(0, duration, size=n))
            assert compute_mr(ts, duration) == oracle_mr(list(ts), duration, 10_000)

    def test_monotone_under_added_timestamps(self):
        rng = np.random.default_rng(3)
        duration = 200_000
        ts: list[int] = []
        prev = 1.0
        for _ in range(50):
            t = int(rng.integers(0, duration))
            if t not in ts:
                ts.append(t)
            cur = compute_mr(ts, duration)
            assert cur <= prev + 1e-15
            prev = cur


class TestComputeScv:
    def test_constant_intervals_zero(self):
        assert compute_scv([0, 10_000, 20_000, 30_000]) == 0.0

    def test_hand_oracle(self):
        # intervals 10, 20 ms: mean 15, population std 5
        assert compute_scv([0, 10_000, 30_000]) == pytest.approx(1.0 / 3.0, abs=1e-15)

    def test_matches_oracle_on_random_sets(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = int(rng.integers(3, 50))
            ts = np.cumsum(rng.integers(1, 10_000, size=n))
            assert compute_scv(ts) == pytest.approx(oracle_scv(list(ts)), rel=1e-12)

    def test_exponential_interarrivals_approach_one(self):
        rng = np.random.default_rng(42)
        gaps = rng.exponential(1.0, size=100_000)
        ts = np.cumsum(gaps)
        assert compute_scv(ts) == pytest.approx(1.0, abs=0.05)

    def test_shift_and_scale_invariance(self):
        rng = np.random.default_rng(5)
        ts = np.cumsum(rng.integers(1, 5_000, size=30)).astype(np.float64)
        base = compute_scv(ts)
        assert compute_scv(ts + 123_456) == pytest.approx(base, rel=1e-12)
        assert compute_scv(ts * 7.5) == pytest.approx(base, rel=1e-12)

    def test_too_few_timestamps(self):
        with pytest.raises(ArgError):
            compute_scv([0, 10])

    def test_non_increasing_rejected(self):
        with pytest.raises(ArgError):
            compute_scv([0, 10, 10, 20])


class TestComputeAcv:
    def test_constant_matrix_zero(self):
        assert compute_acv(np.ones((5, 4))) == 0.0

    def test_single_alternating_column(self):
        col = np.array([[1.0], [3.0], [1.0], [3.0]])
        # mean 2, population std 1 -> CV = 0.5
        assert compute_acv(col) == pytest.approx(0.5, abs=1e-15)

    def test_zero_mean_columns_excluded(self):
        a = np.array([[1.0, 0.0], [3.0, 0.0]])
        assert compute_acv(a) == pytest.approx(0.5)

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateError):
            compute_acv(np.zeros((4, 3)))

    def test_column_scaling_invariance(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(0.5, 2.0, (20, 6))
        scales = rng.uniform(0.1, 10.0, 6)
        assert compute_acv(a * scales) == pytest.approx(compute_acv(a), rel=1e-12)

    def test_needs_two_rows(self):
        with pytest.raises(ArgError):
            compute_acv(np.ones((1, 4)))


class TestMaskedAcv:
    def test_matches_dense_when_fully_observed(self):
        rng = np.random.default_rng(2)
        a = rng.uniform(0.5, 2.0, (10, 4))
        m = np.ones_like(a, dtype=bool)
        assert masked_acv(a, m) == pytest.approx(compute_acv(a), rel=1e-12)

    def test_ignores_masked_rows(self):
        a = np.array([[1.0, 5.0], [3.0, 5.0], [0.0, 5.0], [0.0, 5.0]])
        m = np.array([[1, 1], [1, 1], [0, 1], [0, 1]], dtype=bool)
        # column 0 only sees rows 0-1 -> CV 0.5; column 1 constant -> 0
        assert masked_acv(a, m) == pytest.approx(0.25)
