import numpy as np
import pandas as pd
import pytest

from localvar.exceptions import BadDimension, DataError, GapError, NonNumeric, ParseError
from localvar.panel import TimeSeriesPanel, as_panel, ingest


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def monthly_csv(tmp_path, cols=("US", "DE"), start="2003-01", end="2021-01", drop=None):
    dates = pd.period_range(start, end, freq="M").astype(str)
    rng = np.random.default_rng(0)
    frame = pd.DataFrame(rng.uniform(50, 150, (len(dates), len(cols))), columns=list(cols))
    frame.insert(0, "date", dates)
    if drop is not None:
        frame = frame[frame["date"] != drop]
    path = tmp_path / "monthly.csv"
    frame.to_csv(path, index=False)
    return path


def test_monthly_file_has_217_rows(tmp_path):
    panel = ingest(monthly_csv(tmp_path))
    assert panel.n_obs == 217
    assert panel.d == 2
    assert panel.label(0) == "2003-01" and panel.label(216) == "2021-01"


def test_missing_month_names_gap(tmp_path):
    with pytest.raises(GapError, match="2010-03.*2010-05"):
        ingest(monthly_csv(tmp_path, drop="2010-04"))


def test_column_selection_order(tmp_path):
    path = monthly_csv(tmp_path, cols=("US", "UK", "DE", "FR", "IT"))
    panel = ingest(path, ["US", "DE"])
    assert panel.names == ("US", "DE")
    full = ingest(path)
    np.testing.assert_array_equal(panel.values[:, 1], full.values[:, 2])


def test_unknown_column(tmp_path):
    with pytest.raises(ParseError, match="XX"):
        ingest(monthly_csv(tmp_path), ["XX"])


def test_non_numeric_cell_reports_row_and_column(tmp_path):
    path = write(tmp_path, "date,a,b\n2003-01,1,2\n2003-02,x,3\n")
    with pytest.raises(NonNumeric, match=r"row 3, column 'a'"):
        ingest(path)


def test_empty_cell_is_rejected(tmp_path):
    path = write(tmp_path, "date,a\n2003-01,1\n2003-02,\n")
    with pytest.raises(NonNumeric):
        ingest(path)


def test_duplicate_dates(tmp_path):
    path = write(tmp_path, "date,a\n2003-01,1\n2003-01,2\n")
    with pytest.raises(ParseError, match="duplicate"):
        ingest(path)


def test_rows_are_sorted_and_full_dates_accepted(tmp_path):
    path = write(tmp_path, "date,a\n2003-02-01,2\n2003-01-01,1\n2003-03-01,3\n")
    panel = ingest(path)
    np.testing.assert_array_equal(panel.values[:, 0], [1, 2, 3])
    assert panel.label(0) == "2003-01"


def test_integer_index(tmp_path):
    path = write(tmp_path, "t,a,b\n1,1,2\n2,3,4\n")
    panel = ingest(path)
    assert list(panel.timestamps) == [1, 2]


def test_bad_date(tmp_path):
    with pytest.raises(ParseError):
        ingest(write(tmp_path, "date,a\nyesterday,1\n"))


def test_panel_invariants():
    with pytest.raises(DataError):
        TimeSeriesPanel.from_array([[1.0, np.nan]])
    with pytest.raises(DataError):
        TimeSeriesPanel(np.ones((2, 1)), pd.Index([2, 1]), ("a",))
    with pytest.raises(BadDimension):
        TimeSeriesPanel(np.ones((2, 1)), pd.Index([1, 2]), ("a", "b"))
    panel = as_panel(np.arange(6.0).reshape(3, 2))
    assert panel.names == ("y1", "y2")
    assert not panel.values.flags.writeable
