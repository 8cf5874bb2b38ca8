"""Flat configuration file parsing, formatting, and section extraction."""

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spinerobot.config import (append_config, dump_config, format_value,
                               load_config, parse_value, section)


@pytest.mark.parametrize("text,expected", [
    ("3", 3),
    ("3.5", 3.5),
    ("-2e-4", -2e-4),
    ("1e3", 1e3),
    ("0.22", 0.22),
    ("per-section", "per-section"),
    ("1, 2.5, -3", (1.0, 2.5, -3.0)),
])
def test_parse_value(text, expected):
    got = parse_value(text)
    assert got == expected
    assert type(got) is type(expected)


def test_parse_int_vs_float_distinction():
    assert isinstance(parse_value("5"), int)
    assert isinstance(parse_value("5.0"), float)
    assert isinstance(parse_value("5e0"), float)


def test_load_round_trip(tmp_path):
    entries = {
        "rod.total_length": 0.22,
        "rod.n_sections": 11,
        "rod.gravity": (-9.81, 0.0, 0.0),
        "rod.compression_mode": "per-section",
        "twin.e_scale": 0.85,
    }
    path = tmp_path / "a.cfg"
    dump_config(entries, path, header="test header\nsecond line")
    assert load_config(path) == entries


def test_comments_and_blank_lines_ignored(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("# top\n\nrod.dt = 0.2  # trailing comment\n")
    assert load_config(path) == {"rod.dt": 0.2}


def test_later_assignment_overrides(tmp_path):
    path = tmp_path / "a.cfg"
    path.write_text("rod.youngs_modulus = 2.33e9\n")
    append_config({"rod.youngs_modulus": 1.9e9}, path, comment="calibrated")
    cfg = load_config(path)
    assert cfg["rod.youngs_modulus"] == 1.9e9


def test_append_creates_missing_file(tmp_path):
    path = tmp_path / "fresh.cfg"
    append_config({"a.b": 1}, path)
    assert load_config(path) == {"a.b": 1}


def test_malformed_line_reports_location(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("rod.dt = 0.2\nnot a key value line\n")
    with pytest.raises(ValueError, match="2"):
        load_config(path)


def test_section_extraction():
    cfg = {"rod.dt": 0.2, "rod.n_sections": 11, "twin.e_scale": 0.85}
    assert section(cfg, "rod") == {"dt": 0.2, "n_sections": 11}
    assert section(cfg, "twin") == {"e_scale": 0.85}
    assert section(cfg, "train") == {}


_finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(v=_finite)
@settings(max_examples=100, deadline=None)
def test_float_round_trip_exact(v):
    parsed = parse_value(format_value(v))
    assert isinstance(parsed, (int, float))
    assert float(parsed) == v or (math.isnan(v) and math.isnan(parsed))


@given(v=st.tuples(_finite, _finite, _finite))
@settings(max_examples=50, deadline=None)
def test_vector_round_trip_exact(v):
    assert parse_value(format_value(v)) == v


@given(v=st.integers(min_value=-10**9, max_value=10**9))
@settings(max_examples=50, deadline=None)
def test_int_round_trip(v):
    assert parse_value(format_value(v)) == v
