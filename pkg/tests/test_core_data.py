import numpy as np
import pytest

from tsarag.core_data import (
    MaskMatrix,
    SeriesMatrix,
    chronological_split,
    context_range,
    inverse_standardize,
    make_windows,
    standardize,
)
from tsarag.errors import (
    DegenerateSeries,
    InvalidRatio,
    MissingStats,
    RangeTooShort,
)


def series(values, ids=None, stats=None):
    v = np.atleast_2d(np.asarray(values, dtype=float))
    ids = ids or tuple(f"s{i}" for i in range(v.shape[0]))
    return SeriesMatrix(values=v, series_ids=ids, stats=stats)


def enumerate_windows(values, rng, tau, nu, stride):
    """Naive enumeration oracle: walk anchors one by one."""
    out = []
    t = rng[0] + tau - 1
    while t + nu <= rng[1] - 1:
        out.append((values[:, t - tau + 1 : t + 1], values[:, t + 1 : t + nu + 1], t))
        t += stride
    return out


class TestMakeWindows:
    def test_exhaustive_small(self):
        data = series([1, 2, 3, 4, 5])
        ws = make_windows(data, (0, 5), tau=2, nu=1)
        assert len(ws) == 3
        np.testing.assert_array_equal(ws.inputs[:, 0, :], [[1, 2], [2, 3], [3, 4]])
        np.testing.assert_array_equal(ws.targets[:, 0, :], [[3], [4], [5]])
        np.testing.assert_array_equal(ws.anchor_times, [1, 2, 3])

    def test_single_window_at_minimum_length(self):
        data = series(np.arange(7.0))
        ws = make_windows(data, (0, 7), tau=4, nu=3)
        assert len(ws) == 1

    def test_count_formula_medium(self):
        data = series(np.random.default_rng(3).standard_normal((3, 100)))
        ws = make_windows(data, (0, 100), tau=12, nu=12)
        assert len(ws) == 77
        oracle = enumerate_windows(data.values, (0, 100), 12, 12, 1)
        assert len(oracle) == 77
        for got_in, got_tgt, (exp_in, exp_tgt, t) in zip(ws.inputs, ws.targets, oracle):
            np.testing.assert_array_equal(got_in, exp_in)
            np.testing.assert_array_equal(got_tgt, exp_tgt)

    def test_count_matches_enumeration_randomized(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            tau = int(rng.integers(1, 8))
            nu = int(rng.integers(1, 8))
            stride = int(rng.integers(1, 5))
            length = int(rng.integers(tau + nu, tau + nu + 40))
            data = series(rng.standard_normal((1, length)))
            ws = make_windows(data, (0, length), tau, nu, stride)
            oracle = enumerate_windows(data.values, (0, length), tau, nu, stride)
            assert len(ws) == len(oracle)
            expected = max(0, (length - tau - nu) // stride + 1)
            assert len(ws) == expected

    def test_range_too_short(self):
        data = series(np.arange(5.0))
        with pytest.raises(RangeTooShort):
            make_windows(data, (0, 5), tau=4, nu=2)

    def test_no_target_leakage(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            tau = int(rng.integers(1, 6))
            nu = int(rng.integers(1, 6))
            end = int(rng.integers(tau + nu, 40))
            data = series(rng.standard_normal((2, end + 5)))
            ws = make_windows(data, (0, end), tau, nu)
            assert (ws.anchor_times + nu <= end - 1).all()

    def test_context_range_keeps_anchors_inside_split(self):
        data = series(np.arange(30.0))
        rng = context_range((20, 30), tau=5)
        ws = make_windows(data, rng, tau=5, nu=1)
        assert ws.anchor_times[0] == 20
        assert (ws.anchor_times >= 20).all()


class TestStandardize:
    def test_hand_example(self):
        data = series([1, 2, 3])
        std = standardize(data, (0, 3))
        expected = np.array([-1.224744871391589, 0.0, 1.224744871391589])
        np.testing.assert_allclose(std.values[0], expected, atol=1e-12)
        assert std.stats[0][0] == pytest.approx(2.0)
        assert std.stats[0][1] == pytest.approx(0.816496580927726, abs=1e-12)

    def test_constant_series_degenerate(self):
        with pytest.raises(DegenerateSeries):
            standardize(series([5, 5, 5]), (0, 3))

    def test_idempotent_on_fit_range(self):
        rng = np.random.default_rng(5)
        data = series(rng.standard_normal((3, 40)))
        once = standardize(data, (0, 40))
        twice = standardize(once, (0, 40))
        assert abs(twice.values.mean(axis=1)).max() < 1e-12
        np.testing.assert_allclose(twice.values.std(axis=1), 1.0, atol=1e-12)

    def test_fit_stats_are_zero_mean_unit_std(self):
        rng = np.random.default_rng(7)
        data = series(rng.standard_normal((4, 60)) * 3 + 5)
        std = standardize(data, (0, 36))
        fit = std.values[:, :36]
        assert abs(fit.mean(axis=1)).max() < 1e-10
        np.testing.assert_allclose(fit.std(axis=1), 1.0, atol=1e-10)


class TestInverseStandardize:
    def test_round_trip(self):
        rng = np.random.default_rng(9)
        data = series(rng.standard_normal((2, 25)) * 4 - 1)
        back = inverse_standardize(standardize(data, (0, 25)))
        np.testing.assert_allclose(back.values, data.values, atol=1e-10)

    def test_zero_maps_to_mean(self):
        std = series([0.0], stats=((3.0, 2.0),))
        np.testing.assert_allclose(inverse_standardize(std).values, [[3.0]])

    def test_hand_example(self):
        std = series([1.0, -1.0], stats=((10.0, 4.0),))
        np.testing.assert_allclose(inverse_standardize(std).values, [[14.0, 6.0]])

    def test_missing_stats(self):
        with pytest.raises(MissingStats):
            inverse_standardize(series([1, 2, 3]))


class TestChronologicalSplit:
    @pytest.mark.parametrize(
        "n, ratio, expected",
        [
            (10, (6, 2, 2), ((0, 6), (6, 8), (8, 10))),
            (10, (7, 1, 2), ((0, 7), (7, 8), (8, 10))),
            (100, (1, 1, 1), ((0, 33), (33, 66), (66, 100))),
        ],
    )
    def test_examples(self, n, ratio, expected):
        split = chronological_split(n, ratio)
        assert (split.train_range, split.val_range, split.test_range) == expected

    def test_invalid_ratio(self):
        with pytest.raises(InvalidRatio):
            chronological_split(10, (6, 0, 4))
        with pytest.raises(InvalidRatio):
            chronological_split(5, (6, 2, 2))

    def test_cover_and_disjoint_randomized(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            parts = tuple(int(x) for x in rng.integers(1, 9, size=3))
            n = int(rng.integers(sum(parts), 500))
            split = chronological_split(n, parts)
            a, b = split.train_range
            c, d = split.val_range
            e, f = split.test_range
            assert a == 0 and f == n
            assert b == c and d == e
            assert a <= b <= d <= f


class TestTypes:
    def test_series_matrix_rejects_nan(self):
        with pytest.raises(ValueError):
            series([1.0, np.nan])

    def test_mask_matrix_rejects_other_values(self):
        with pytest.raises(ValueError):
            MaskMatrix(flags=np.array([[0, 2]]))

    def test_values_are_frozen(self):
        data = series([1, 2, 3])
        with pytest.raises(ValueError):
            data.values[0, 0] = 9.0
