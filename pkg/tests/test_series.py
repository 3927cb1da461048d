import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hazfractal.errors import InvalidInput, InvalidWindowSize, UnderdeterminedFit
from hazfractal.series import (
    TimeSeries,
    fit_windows,
    local_trend,
    profile,
    segment_bidirectional,
    window_count,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
series_arrays = arrays(np.float64, st.integers(4, 300), elements=finite)


def test_time_series_is_read_only():
    ts = TimeSeries([1.0, 2.0, 3.0])
    assert len(ts) == 3 and ts.mean == 2.0
    with pytest.raises(ValueError):
        ts.values[0] = 5.0


@pytest.mark.parametrize("bad", [[], [1.0, np.nan], [np.inf]])
def test_time_series_rejects_bad_values(bad):
    with pytest.raises(InvalidInput):
        TimeSeries(bad)


def test_profile_small_example():
    np.testing.assert_allclose(profile([1.0, 2.0, 3.0]).values, [-1.0, -1.0, 0.0])


@given(series_arrays, finite)
def test_profile_ignores_constant_shift(x, c):
    np.testing.assert_allclose(profile(x + c).values, profile(x).values, atol=1e-6 * (1 + abs(c)))


@given(series_arrays)
def test_profile_telescopes_to_zero(x):
    prof = profile(x).values
    assert abs(prof[-1]) <= 1e-9 * max(1.0, np.abs(x).sum())


def test_window_count_and_errors():
    assert window_count(10, 3) == 3
    with pytest.raises(InvalidWindowSize):
        window_count(10, 1)
    with pytest.raises(InvalidWindowSize):
        window_count(3, 4)


def test_segment_example():
    grid = segment_bidirectional(np.arange(10.0), 3)
    assert list(grid.forward_starts) == [0, 3, 6]
    assert list(grid.backward_starts) == [7, 4, 1]
    assert grid.windows[3] == range(7, 10)


@given(st.integers(2, 200), st.data())
def test_segments_cover_both_ends(length, data):
    s = data.draw(st.integers(2, length))
    grid = segment_bidirectional(np.zeros(length), s)
    assert len(grid) == 2 * (length // s)
    forward = set().union(*map(set, grid.windows[: grid.count]))
    backward = set().union(*map(set, grid.windows[grid.count:]))
    assert forward == set(range(grid.count * s))
    assert backward == set(range(length - grid.count * s, length))
    assert grid.take(np.arange(length)).shape == (2 * grid.count, s)


@given(arrays(np.float64, st.integers(5, 60), elements=finite), st.integers(1, 3))
@settings(max_examples=50)
def test_local_trend_matches_polyfit(y, m):
    k = np.arange(1, y.size + 1)
    expected = np.polyval(np.polyfit(k, y, m), k)
    trend = local_trend(y, m)
    assert trend.order == m
    np.testing.assert_allclose(trend.fitted, expected, atol=1e-7 * (1 + np.abs(y).max()))
    np.testing.assert_allclose(fit_windows(y[None, :], m)[0], expected, atol=1e-7 * (1 + np.abs(y).max()))


def test_polynomial_of_order_m_is_fitted_exactly():
    k = np.arange(1, 21, dtype=float)
    y = 2 * k**2 - 3 * k + 1
    np.testing.assert_allclose(local_trend(y, 2).coefficients, [2, -3, 1], atol=1e-9)
    np.testing.assert_allclose(fit_windows(y[None], 2)[0], y, atol=1e-9)


def test_underdetermined_fit():
    with pytest.raises(UnderdeterminedFit):
        local_trend([1.0, 2.0], 2)
    with pytest.raises(UnderdeterminedFit):
        fit_windows(np.zeros((1, 2)), 2)
