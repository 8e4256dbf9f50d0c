import numpy as np
import pytest

from maxpem.model import Theta
from maxpem.storage import (DataError, fmt, read_manifest, read_model_text,
                            read_timeseries_csv, write_csv, write_manifest,
                            write_model_text, write_timeseries_csv)


class TestFmt:
    def test_roundtrip_exact(self):
        rng = np.random.default_rng(0)
        for v in rng.standard_normal(200) * 10.0 ** rng.integers(-12, 12,
                                                                 200):
            assert float(fmt(v)) == v

    def test_bool_and_int(self):
        assert fmt(True) == "1"
        assert fmt(False) == "0"
        assert fmt(np.int64(7)) == "7"


class TestTimeseriesCsv:
    def test_roundtrip(self, tmp_path):
        u = np.random.default_rng(1).standard_normal(50)
        y = np.random.default_rng(2).standard_normal(50)
        p = tmp_path / "d.csv"
        write_timeseries_csv(p, u, y)
        data = read_timeseries_csv(p)
        np.testing.assert_array_equal(data.u, u)
        np.testing.assert_array_equal(data.y, y)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("time,u,y\n1,0,0\n")
        with pytest.raises(DataError):
            read_timeseries_csv(p)

    def test_bad_index_reports_line(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,u,y\n1,0,0\n3,0,0\n")
        with pytest.raises(DataError, match=":3"):
            read_timeseries_csv(p)

    def test_non_numeric_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,u,y\n1,a,0\n")
        with pytest.raises(DataError):
            read_timeseries_csv(p)

    def test_non_finite_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,u,y\n1,nan,0\n")
        with pytest.raises(DataError):
            read_timeseries_csv(p)

    def test_empty_rejected(self, tmp_path):
        p = tmp_path / "d.csv"
        p.write_text("t,u,y\n")
        with pytest.raises(DataError):
            read_timeseries_csv(p)


class TestModelText:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        th = Theta(rng.standard_normal(6), 0.1 * rng.standard_normal(6))
        p = tmp_path / "m.model"
        write_model_text(p, th, 0.37)
        back, sigma2 = read_model_text(p)
        np.testing.assert_array_equal(back.b, th.b)
        np.testing.assert_array_equal(back.c, th.c)
        assert sigma2 == 0.37

    def test_missing_taps_default_zero(self, tmp_path):
        p = tmp_path / "m.model"
        p.write_text("T=3\nsigma2=1\nb 0 2.5\nc 2 -0.5\n")
        th, _ = read_model_text(p)
        np.testing.assert_array_equal(th.b, [2.5, 0, 0])
        np.testing.assert_array_equal(th.c, [0, -0.5, 0])

    def test_comments_ignored(self, tmp_path):
        p = tmp_path / "m.model"
        p.write_text("# comment\nT=1\nsigma2=1\nb 0 1\nc 1 0.2\n")
        th, _ = read_model_text(p)
        assert th.b[0] == 1.0

    def test_out_of_range_index(self, tmp_path):
        p = tmp_path / "m.model"
        p.write_text("T=2\nsigma2=1\nb 5 1\n")
        with pytest.raises(DataError):
            read_model_text(p)

    def test_c_index_zero_rejected(self, tmp_path):
        # c_0 is fixed at 1 and must not appear as a tap line
        p = tmp_path / "m.model"
        p.write_text("T=2\nsigma2=1\nc 0 0.5\n")
        with pytest.raises(DataError):
            read_model_text(p)

    def test_missing_T(self, tmp_path):
        p = tmp_path / "m.model"
        p.write_text("sigma2=1\nb 0 1\n")
        with pytest.raises(DataError):
            read_model_text(p)


class TestCsvAndManifest:
    def test_write_csv_formats_numbers(self, tmp_path):
        p = tmp_path / "r.csv"
        write_csv(p, ["a", "b"], [{"a": 1, "b": True},
                                  {"a": 0.5, "b": None}])
        text = p.read_text()
        assert text.splitlines() == ["a,b", "1,1", "0.5,"]

    def test_manifest_roundtrip(self, tmp_path):
        p = tmp_path / "m.txt"
        write_manifest(p, {"alpha": "x", "num": 0.25})
        back = read_manifest(p)
        assert back == {"alpha": "x", "num": "0.25"}
