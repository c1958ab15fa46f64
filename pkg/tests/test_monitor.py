import io
import math
import xml.etree.ElementTree as ET
from importlib import resources

import numpy as np
import pytest

from ecpchart.chart import ChartConfig, Variant, make_limits
from ecpchart.errors import DataError, ValidationError
from ecpchart.misclass import MisclassMatrix, correct_proportion
from ecpchart.monitor import (
    ingest_counts,
    p0_star_from_data,
    read_chart_csv,
    render_chart,
    run_chart,
    write_chart,
)

SVG = "{http://www.w3.org/2000/svg}"


@pytest.fixture(scope="module")
def juice():
    with resources.files("ecpchart").joinpath("data/orange_juice.csv").open(encoding="utf-8") as fh:
        return ingest_counts(fh)


def _limits(variant, pi, l=2.0, p0=0.05, n=50):
    return make_limits(variant, l, ChartConfig(p0=p0, lam=0.2, n=n), pi)


def test_fixture_in_control_rate(juice):
    ic = juice.select("IC")
    assert len(juice) == 54 and len(ic) == 24
    assert int(ic.d.sum()) == 133 and int(ic.n.sum()) == 1200
    assert round(ic.pooled_proportion(), 3) == 0.111


def test_item_level_input_is_aggregated():
    s = ingest_counts(io.StringIO("time,status\n1,1\n1,0\n1,0\n2,1\n2,1\n"))
    assert s.times == (1, 2)
    assert s.n.tolist() == [3, 2] and s.d.tolist() == [1, 2]


@pytest.mark.parametrize("text,line", [
    ("time,n,nonconforming\n1,5,6\n", 2),
    ("time,n,nonconforming\n1,5,2\n1,5,1\n", 3),
    ("time,n,nonconforming\n2,5,2\n1,5,1\n", 3),
    ("time,n,nonconforming\n1,5,x\n", 2),
    ("time,n,nonconforming\n1,0,0\n", 2),
])
def test_bad_rows_report_line(text, line):
    with pytest.raises(DataError, match=f"line {line}"):
        ingest_counts(io.StringIO(text))


@pytest.mark.parametrize("text", ["", "time,n,nonconforming\n", "# only a comment\n", "a,b,c\n1,2,3\n"])
def test_empty_or_unknown_input(text):
    with pytest.raises(DataError):
        ingest_counts(io.StringIO(text))


def test_run_chart_matches_hand_recursion(juice):
    pi = MisclassMatrix.symmetric(0.95)
    lim = _limits(Variant.CORRECTED, pi, p0=correct_proportion(0.111, pi))
    cs = run_chart(juice, lim)
    e = lim.center
    expected = []
    for d, n in zip(juice.d, juice.n):
        e = 0.2 * (d / n - pi.pi10) / pi.determinant + 0.8 * e
        expected.append(e)
    np.testing.assert_allclose(cs.ewma, expected, rtol=1e-12)
    np.testing.assert_array_equal(cs.signal, cs.ewma >= cs.ucl)
    assert cs.first_signal == juice.times[int(np.argmax(cs.signal))]


def test_identity_makes_naive_and_corrected_equal(juice):
    ident = MisclassMatrix.identity()
    a = run_chart(juice, _limits(Variant.NAIVE, ident))
    b = run_chart(juice, _limits(Variant.CORRECTED, ident))
    np.testing.assert_allclose(a.ewma, b.ewma, rtol=0, atol=0)
    np.testing.assert_allclose(a.ucl, b.ucl, rtol=1e-15)


def test_varying_sample_sizes_change_limits():
    s = ingest_counts(io.StringIO("time,n,nonconforming\n1,10,1\n2,40,2\n3,40,2\n"))
    cs = run_chart(s, _limits(Variant.TRUE, MisclassMatrix.identity(), n=10))
    lam, p0 = 0.2, 0.05
    direct = [p0 + 2.0 * math.sqrt(p0 * (1 - p0) * lam * (1 - (1 - lam) ** (2 * t)) / (n * (2 - lam)))
              for t, n in ((1, 10), (2, 40), (3, 40))]
    np.testing.assert_allclose(cs.ucl, direct, rtol=1e-12)


def test_svg_parses_and_marks_signals(juice):
    pi = MisclassMatrix.symmetric(0.99)
    cs = run_chart(juice, _limits(Variant.NAIVE, pi, l=1.0, p0=0.05))
    root = ET.fromstring(render_chart(cs))
    circles = root.findall(f"{SVG}circle")
    assert len(circles) == len(juice)
    flagged = [c for c in circles if "signal" in c.get("class").split()]
    assert len(flagged) == cs.n_signals > 0
    classes = {el.get("class") for el in root.iter() if el.get("class")}
    assert {"ewma", "ucl", "lcl"} <= classes


def test_csv_round_trip(tmp_path, juice):
    cs = run_chart(juice, _limits(Variant.TRUE, MisclassMatrix.identity()))
    svg = write_chart(cs, tmp_path / "chart.svg")
    ET.parse(svg)
    cols = read_chart_csv(tmp_path / "chart.csv")
    assert cols["time"] == list(juice.times)
    np.testing.assert_allclose(cols["ewma"], cs.ewma, rtol=1e-5)
    assert cols["signal"] == [bool(s) for s in cs.signal]


def test_render_empty_series_rejected(juice):
    cs = run_chart(juice, _limits(Variant.TRUE, MisclassMatrix.identity()))
    empty = type(cs)((), np.array([]), np.array([]), np.array([], bool), {})
    with pytest.raises(ValidationError):
        render_chart(empty)


def test_p0_from_data_warns(juice):
    with pytest.warns(UserWarning):
        assert p0_star_from_data(juice, "IC") == pytest.approx(133 / 1200)
