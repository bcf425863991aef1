import numpy as np
import pytest

from hcr.crossdeps import PanelFrame
from hcr.errors import AlignmentError, ConfigError, DataError
from hcr.ingest import ingest_csv
from hcr.marginals import SeriesFrame


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_single_column(tmp_path):
    p = write(tmp_path, "\n".join(str(100 + i) for i in range(10)) + "\n")
    s = ingest_csv(p)
    assert isinstance(s, SeriesFrame) and len(s) == 10
    assert s.values[3] == 103.0 and s.timestamps is None


def test_timestamp_and_header(tmp_path):
    p = write(tmp_path, "date,close\n2001-01-02,10.5\n2001-01-03,10.7\n")
    s = ingest_csv(p)
    assert s.name == "close" and s.timestamps == ["2001-01-02", "2001-01-03"]
    np.testing.assert_array_equal(s.values, [10.5, 10.7])


def test_panel_and_selectors(tmp_path):
    p = write(tmp_path, "date,a,b,c\nd1,1,2,3\nd2,4,5,6\n")
    panel = ingest_csv(p)
    assert isinstance(panel, PanelFrame) and panel.names == ["a", "b", "c"]
    sub = ingest_csv(p, ["c", "a"])
    np.testing.assert_array_equal(sub.values, [[3, 1], [6, 4]])
    one = ingest_csv(p, [1])
    assert isinstance(one, SeriesFrame) and one.name == "b"
    with pytest.raises(ConfigError):
        ingest_csv(p, ["zz"])


def test_ragged_panel_names_column(tmp_path):
    names = [f"s{i}" for i in range(29)]
    rows = [",".join(["t"] + names)]
    for r in range(6):
        vals = [str(1 + r + i) for i in range(29)]
        if r >= 4:
            vals[17] = ""
        rows.append(",".join([f"d{r}"] + vals))
    p = write(tmp_path, "\n".join(rows) + "\n")
    with pytest.raises(AlignmentError) as err:
        ingest_csv(p)
    assert "s17" in str(err.value)


def test_bad_cells_report_lines(tmp_path):
    p = write(tmp_path, "a\n1\n2\nx\n4\n")
    with pytest.raises(DataError) as err:
        ingest_csv(p)
    assert "line 4" in str(err.value)
    p = write(tmp_path, "a,b\n1,2\n,3\n4,5\n", "gap.csv")
    with pytest.raises(DataError) as err:
        ingest_csv(p)
    assert "line 3" in str(err.value)


def test_empty_and_missing(tmp_path):
    with pytest.raises(DataError):
        ingest_csv(write(tmp_path, ""))
    with pytest.raises(DataError):
        ingest_csv(write(tmp_path, "a,b\n", "hdr.csv"))
    with pytest.raises(ConfigError):
        ingest_csv(tmp_path / "nope.csv")
