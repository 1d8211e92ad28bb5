import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blenderlab.certificate import Certificate, RunConfig, dumps, validate, write_atomic

margins = st.lists(st.floats(-1, 1, allow_nan=False), min_size=1, max_size=20)


def test_from_margins_picks_worst_point():
    c = Certificate.from_margins("chk", [0.3, -0.2, 0.5], np.array([1, 2j, 3]), floor=0.0)
    assert not c.passed
    assert c.worst_margin == -0.2
    assert c.worst_point == [[0.0, 2.0]]
    assert c.samples == 3
    assert c.params["margin_floor"] == 0.0


def test_floor_is_inclusive():
    assert Certificate.from_margins("a", [1e-3], [0j], floor=1e-3).passed
    assert not Certificate.from_margins("a", [9.99e-4], [0j], floor=1e-3).passed


def test_empty_and_nan_fail():
    assert not Certificate.from_margins("a", [], []).passed
    assert not Certificate.from_margins("a", [0.5, np.nan], [0j, 1j], floor=0).passed


@given(st.lists(margins, min_size=1, max_size=5), st.floats(0, 0.5))
def test_combine_is_conjunction_and_minimum(groups, floor):
    subs = [Certificate.from_margins(f"c{k}", g, np.zeros(len(g)), floor) for k, g in enumerate(groups)]
    top = Certificate.combine("all", subs)
    assert top.passed == all(min(g) >= floor for g in groups)
    assert top.worst_margin == min(min(g) for g in groups)
    assert top.samples == sum(len(g) for g in groups)
    assert sorted(top.failing()) == sorted(f"c{k}" for k, g in enumerate(groups) if min(g) < floor)


def test_json_roundtrip_and_schema():
    sub = Certificate.from_margins("leaf", [0.2, 0.4], np.array([1 + 1j, 2]), 0.1, {"z": 1 + 2j})
    top = Certificate.combine("root", [sub], {"array": np.arange(3)})
    d = top.to_json()
    validate(d)
    assert d["pass"] is True
    back = Certificate.from_json(json.loads(top.dumps()))
    assert back.dumps() == top.dumps()
    assert top.find("leaf").worst_margin == 0.2
    assert top.find("nope") is None


def test_schema_rejects_garbage():
    import jsonschema
    with pytest.raises(jsonschema.ValidationError):
        validate({"check_name": 3})


def test_dumps_is_deterministic_and_finite():
    a = dumps({"b": 1.0, "a": [np.float64(2.5), complex(1, -1)], "c": float("inf")})
    assert a == dumps({"c": float("inf"), "a": [2.5, 1 - 1j], "b": 1.0})
    assert "Infinity" not in a and "NaN" not in a


def test_write_atomic(tmp_path):
    p = write_atomic(tmp_path / "sub" / "x.json", "hello")
    assert p.read_text() == "hello"
    write_atomic(p, b"bytes")
    assert p.read_bytes() == b"bytes"
    assert [f.name for f in p.parent.iterdir()] == ["x.json"]


@given(st.floats(1e-9, 1), st.integers(1, 4096), st.integers(0, 2 ** 31), st.integers(1, 10 ** 6))
def test_run_config_roundtrip(floor, grid, seed, cap):
    rc = RunConfig(floor, grid, seed, cap, "o")
    assert RunConfig.from_json(json.loads(json.dumps(rc.to_json()))) == rc


def test_run_config_validation():
    with pytest.raises(ValueError):
        RunConfig(margin_floor=0)
    with pytest.raises(ValueError):
        RunConfig(seed=-1)
