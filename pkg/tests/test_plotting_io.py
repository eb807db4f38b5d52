import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from galton_dnp.errors import EmptySeries, ValidationError
from galton_dnp.io import csv_text, json_text, sha256_file, write_csv, write_json, write_manifest
from galton_dnp.plotting import Series, emit_plot

SVG = "{http://www.w3.org/2000/svg}"


def test_svg_is_valid_and_deterministic():
    x = np.linspace(0, 1, 20)
    series = [Series(x, x ** 2, "square", markers=True), {"x": x, "y": np.sqrt(x), "label": "root & co"}]
    svg = emit_plot(series, {"title": "t", "xlabel": "f0 (MHz)", "ylabel": "P"})
    root = ET.fromstring(svg.encode())
    assert root.tag == SVG + "svg"
    assert len(root.findall(SVG + "polyline")) == 2
    assert len(root.findall(SVG + "circle")) == 20
    assert svg == emit_plot(series, {"title": "t", "xlabel": "f0 (MHz)", "ylabel": "P"})


def test_svg_flat_and_single_point():
    ET.fromstring(emit_plot([Series([1.0], [2.0])]).encode())
    ET.fromstring(emit_plot([Series([0, 1, 2], [0, 0, 0])]).encode())


def test_svg_errors():
    with pytest.raises(EmptySeries):
        emit_plot([])
    with pytest.raises(EmptySeries):
        emit_plot([Series([], [])])
    with pytest.raises(ValidationError):
        emit_plot([Series([0, 1], [0])])


def test_csv_round_trip_and_format(tmp_path):
    rows = [{"a": 0.1, "b": 1}, {"a": 1 / 3, "b": 2}]
    text = csv_text(rows)
    assert text.splitlines()[0] == "a,b" and "\r" not in text
    assert float(text.splitlines()[2].split(",")[0]) == 1 / 3
    p = write_csv(tmp_path / "x.csv", rows)
    assert p.read_text() == text


def test_json_sorted_and_numpy(tmp_path):
    obj = {"b": np.float64(1.5), "a": np.arange(3)}
    text = json_text(obj)
    assert list(json.loads(text)) == ["a", "b"] and json.loads(text)["a"] == [0, 1, 2]
    assert write_json(tmp_path / "o.json", obj).read_text() == text


def test_manifest(tmp_path):
    out = write_csv(tmp_path / "r.csv", [{"x": 1}])
    m = write_manifest(tmp_path, "sweep", {"config": None}, 7, [out])
    data = json.loads(m.read_text())
    assert data["seed"] == 7 and data["command"] == "sweep"
    assert sha256_file(out) in json.dumps(data)
    again = write_manifest(tmp_path, "sweep", {"config": None}, 7, [out]).read_text()
    assert again == m.read_text()
