import numpy as np
import pandas as pd
import pytest
from hypothesis import given, strategies as st

from localvar.crisis import closed_form_global, crisis_indicator, crisis_series, global_crisis
from localvar.exceptions import ConfigError, EmptyPairSet, IndexOutOfRange


@pytest.mark.parametrize("k, expected", [(1, 1.0), (6, 0.0), (3, 0.6)])
def test_indicator_examples(k, expected):
    assert crisis_indicator(k, 6) == pytest.approx(expected, abs=1e-15)


def test_indicator_errors():
    for bad in (0, 7, 2.5):
        with pytest.raises(IndexOutOfRange):
            crisis_indicator(bad, 6)
    with pytest.raises(IndexOutOfRange):
        crisis_indicator(1, 1)


def test_global_endpoints():
    dates = ["2008-01", "2008-02"]
    calm = crisis_series({f"p{i}": pd.Series([6, 6], index=dates) for i in range(10)}, 6)
    full = crisis_series({f"p{i}": pd.Series([1, 1], index=dates) for i in range(10)}, 6)
    assert np.all(calm.global_indicator() == 0)
    assert np.all(full.global_indicator() == 1)


def test_nine_calm_one_crisis():
    per_pair = pd.DataFrame([[crisis_indicator(6, 6)] * 9 + [crisis_indicator(1, 6)]])
    assert global_crisis(per_pair, "mean").iloc[0] == pytest.approx(0.1)
    assert global_crisis(per_pair, "median").iloc[0] == 0.0


@given(st.lists(st.lists(st.integers(1, 6), min_size=10, max_size=10), min_size=1, max_size=20))
def test_mean_equals_closed_form(rows):
    k = np.array(rows, dtype=float)
    per_pair = pd.DataFrame(crisis_indicator(k, 6))
    mean = global_crisis(per_pair).to_numpy()
    np.testing.assert_allclose(mean, closed_form_global(k.sum(axis=1), 5, 6), atol=1e-12)
    assert np.all((mean >= 0) & (mean <= 1))


@given(st.lists(st.integers(1, 6), min_size=3, max_size=10), st.data())
def test_lowering_one_index_never_lowers_mean(ks, data):
    i = data.draw(st.integers(0, len(ks) - 1))
    lower = list(ks)
    lower[i] = data.draw(st.integers(1, ks[i]))
    before = global_crisis(pd.DataFrame([crisis_indicator(ks, 6)])).iloc[0]
    after = global_crisis(pd.DataFrame([crisis_indicator(lower, 6)])).iloc[0]
    assert after >= before - 1e-15


def test_missing_pairs_and_coverage(tmp_path):
    dates = ["a", "b", "c"]
    cs = crisis_series({"US-DE": pd.Series([1, np.nan, 6], index=dates),
                        "US-UK": pd.Series([6, 4, np.nan], index=dates)}, 6)
    np.testing.assert_allclose(cs.coverage, [1.0, 0.5, 0.5])
    np.testing.assert_allclose(cs.global_indicator(), [0.5, 0.4, 0.0])
    cs.to_csv(tmp_path / "crisis.csv")
    frame = pd.read_csv(tmp_path / "crisis.csv")
    assert list(frame.columns) == ["date", "CI_US-DE", "CI_US-UK", "global_mean",
                                   "global_median", "coverage"]


def test_empty_inputs():
    with pytest.raises(EmptyPairSet):
        crisis_series({}, 6)
    with pytest.raises(EmptyPairSet):
        global_crisis(pd.DataFrame([[np.nan, np.nan]]))
    with pytest.raises(ConfigError):
        global_crisis(pd.DataFrame([[0.5]]), "max")
