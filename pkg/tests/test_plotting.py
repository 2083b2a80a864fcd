import xml.etree.ElementTree as ET

import pytest

from forage.plotting import Curve, PlotError, nice_ticks, series_chart, sweep_chart, violin_chart

NS = "{http://www.w3.org/2000/svg}"


def curves():
    x = list(range(11))
    return [
        Curve("greedy", x, [10.0 * t for t in x], [1.0] * 11),
        Curve("levy", x, [None, None] + [5.0 * t for t in x[2:]], None),
    ]


def test_series_chart_is_valid_and_stable():
    a = series_chart([("PTA_D", "%", curves()), ("PTA_C", "%", curves())])
    b = series_chart([("PTA_D", "%", curves()), ("PTA_C", "%", curves())])
    assert a == b
    root = ET.fromstring(a)
    assert root.tag == NS + "svg"
    texts = [t.text for t in root.iter(NS + "text")]
    assert "PTA_D" in texts and "PTA_C" in texts
    assert texts.count("greedy") == 2


def test_empty_series_rejected():
    with pytest.raises(PlotError):
        series_chart([("x", "y", [Curve("a", [0, 1], [None, None])])])
    with pytest.raises(PlotError):
        violin_chart([("a", {"dsl": [None]})])


def test_sweep_chart_has_fit_lines():
    c = Curve("greedy (scout)", [0.0, 0.5, 1.0], [90.0, 60.0, 40.0], [2.0, 2.0, 2.0])
    svg = sweep_chart([c], [(-50.0, 88.0)], "pta_c_final", "t")
    root = ET.fromstring(svg)
    assert any(e.get("stroke-dasharray") for e in root.iter(NS + "line"))


def test_violin_chart_panels():
    svg = violin_chart([("greedy", {"dsl": [0.1, 0.2, 0.3, 0.25], "itl": [0.0, 0.1]}),
                        ("levy", {"dsl": [0.4, 0.4], "itl": [0.3, 0.5, 0.2]})])
    root = ET.fromstring(svg)
    texts = [t.text for t in root.iter(NS + "text")]
    assert "DSL" in texts and "ITL" in texts
    assert len(list(root.iter(NS + "polygon"))) == 3  # the constant dsl group has no density


@pytest.mark.parametrize("lo, hi", [(0, 100), (0, 1), (-3.2, 7.9), (0.0012, 0.0077), (5, 5)])
def test_nice_ticks_cover_range(lo, hi):
    t = nice_ticks(lo, hi)
    assert 2 <= len(t) <= 12
    assert all(b > a for a, b in zip(t, t[1:]))
    assert t[0] >= lo - 1e-12 and t[-1] <= max(hi, lo + 1) + 1e-12
