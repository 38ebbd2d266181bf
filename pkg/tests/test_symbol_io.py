import json
import math

import numpy as np
import pytest

from mwkb.errors import ScenarioError
from mwkb.symbol_grid import SymbolGrid
from mwkb.symbol_io import (
    dumps_json,
    grid_from_bytes,
    grid_to_bytes,
    read_grid,
    to_jsonable,
    write_grid,
    write_grid_csv,
)


def sample_grid():
    axes = (np.linspace(-1, 1, 3), np.linspace(0, 2, 4))
    vals = np.arange(12).reshape(3, 4) * (1 + 0.5j)
    status = np.zeros((3, 4), dtype=np.int8)
    status[1, 2] = 1
    return SymbolGrid(axes, vals, 0.5, 0.25, "heisenberg", status, None, {"note": "x", "skip": object()})


def test_binary_round_trip(tmp_path):
    g = sample_grid()
    path = write_grid(tmp_path / "g.mwkb", g, "abc")
    back = read_grid(path)
    np.testing.assert_array_equal(back.values, g.values)
    np.testing.assert_array_equal(back.status, g.status)
    for a, b in zip(back.axes, g.axes):
        np.testing.assert_array_equal(a, b)
    assert (back.t, back.hbar, back.kind) == (0.5, 0.25, "heisenberg")
    assert back.meta["scenario_hash"] == "abc"
    assert back.meta["note"] == "x" and "skip" not in back.meta


def test_binary_layout():
    data = grid_to_bytes(sample_grid(), "h")
    assert data[:4] == b"MWKB"
    assert int.from_bytes(data[4:6], "little") == 1
    hlen = int.from_bytes(data[8:12], "little")
    assert len(data) == 12 + hlen + 8 * 7 + 16 * 12 + 12
    assert grid_to_bytes(sample_grid(), "h") == data


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:4] + (7).to_bytes(2, "little") + d[6:],
    lambda d: d[:-3],
    lambda d: d[:6],
])
def test_corrupt_files_are_rejected(mutate):
    with pytest.raises(ScenarioError):
        grid_from_bytes(mutate(grid_to_bytes(sample_grid())))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError):
        read_grid(tmp_path / "absent.mwkb")


def test_csv_rows(tmp_path):
    path = write_grid_csv(tmp_path / "g.csv", sample_grid(), "abc")
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# t=0.5 hbar=0.25 kind=heisenberg scenario_hash=abc")
    assert lines[1] == "q1,p1,re,im,status"
    assert len(lines) == 2 + 12
    assert lines[2 + 6].split(",")[-1] == "1"


def test_jsonable_conversion():
    obj = {"a": np.float64(1.5), "b": np.array([1 + 2j]), "c": math.nan, "d": (np.int32(3),), "e": print}
    assert to_jsonable(obj) == {"a": 1.5, "b": [[1.0, 2.0]], "c": "nan", "d": [3]}
    text = dumps_json({"z": 1, "a": [np.inf]})
    assert text.endswith("\n")
    assert list(json.loads(text)) == ["a", "z"]
    assert json.loads(text)["a"] == ["inf"]
