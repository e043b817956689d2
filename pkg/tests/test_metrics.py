import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from selfrank.metrics import DegenerateInput, all_metrics, lcc, mae_mse, rankdata, srocc

series = st.lists(st.floats(-1e3, 1e3, allow_nan=False, allow_subnormal=False), min_size=3, max_size=30)


def test_lcc_examples():
    y = np.array([1.0, 4.0, 2.0, 8.0])
    assert lcc(y, 2 * y + 3) == pytest.approx(1.0, abs=1e-15)
    assert lcc(y, -y) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(DegenerateInput):
        lcc(y, np.ones(4))


def test_srocc_examples():
    assert srocc([1, 2, 3], [10, 20, 30]) == 1.0
    assert srocc([1, 2, 3], [3, 2, 1]) == -1.0
    with pytest.raises(DegenerateInput):
        srocc([1, 1, 1], [1, 2, 2])


def test_mae_mse_examples():
    assert mae_mse([1, 2], [1, 2]) == (0.0, 0.0)
    assert mae_mse([3, 5], [4, 4]) == (1.0, 1.0)
    mae, mse = mae_mse([0, 0], [3, 4])
    assert mae == 3.5 and mse == pytest.approx(np.sqrt(12.5), abs=1e-15)


def test_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(50):
        y, p = rng.normal(size=50), rng.normal(size=50)
        assert abs(lcc(y, p) - stats.pearsonr(y, p)[0]) <= 1e-12
        assert abs(srocc(y, p) - stats.spearmanr(y, p)[0]) <= 1e-12


def test_ties_use_averaged_ranks():
    assert rankdata([3, 1, 3, 2]).tolist() == [3.5, 1.0, 3.5, 2.0]
    y, p = [1, 2, 2, 3, 5], [2, 1, 4, 4, 9]
    assert srocc(y, p) == pytest.approx(stats.spearmanr(y, p)[0], abs=1e-12)


def test_formula_agrees_with_rank_pearson_without_ties():
    rng = np.random.default_rng(20)
    y, p = rng.normal(size=20), rng.normal(size=20)
    assert abs(srocc(y, p) - lcc(rankdata(y), rankdata(p))) <= 1e-12


def test_all_metrics_degenerate_correlations_are_nan():
    m = all_metrics([1, 2, 3], [2, 2, 2])
    assert np.isnan(m["LCC"]) and np.isnan(m["SROCC"]) and m["MAE"] == pytest.approx(2 / 3)


@settings(max_examples=60, deadline=None)
@given(series, st.integers(0, 2 ** 32 - 1))
def test_srocc_invariant_under_increasing_maps(y, seed):
    y = np.array(y)
    p = np.random.default_rng(seed).normal(size=y.size)
    if np.ptp(y) == 0:
        return
    assert srocc(y, p) == pytest.approx(srocc(y ** 3 + y, p ** 3 + p), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(series, st.floats(0.01, 100), st.floats(-100, 100))
def test_lcc_invariant_under_positive_affine(y, a, b):
    y = np.array(y)
    p = np.cos(np.arange(y.size))
    if np.std(y) < 1e-6:
        return
    assert lcc(y, p) == pytest.approx(lcc(a * y + b, p), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(series, series)
def test_mae_never_exceeds_rms(y, p):
    n = min(len(y), len(p))
    mae, mse = mae_mse(y[:n], p[:n])
    assert mae <= mse * (1 + 1e-12) + 1e-12
