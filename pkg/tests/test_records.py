"""Tests for CSV result files."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from catlab.records import format_value, read_blocks, write_blocks, write_csv, write_dicts


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.bool_(False)) == "false"
    assert format_value(3) == "3"
    assert format_value(np.int64(7)) == "7"
    assert format_value(0.1) == "0.10000000000000001"
    assert float(format_value(np.float64(1 / 3))) == 1 / 3
    assert format_value(None) == ""
    assert format_value("pass") == "pass"


def test_deterministic_files_have_no_timestamp(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x", "y"], [[1, 0.5]], deterministic=True)
    assert path.read_bytes() == b"x,y\n1,0.5\n"
    stamped = write_csv(tmp_path / "sub" / "b.csv", ["x"], [[1]], deterministic=False)
    lines = stamped.read_text().splitlines()
    assert lines[0].startswith("# generated ")
    assert lines[1:] == ["x", "1"]


def test_write_dicts(tmp_path):
    path = write_dicts(tmp_path / "rows.csv", [{"a": 1, "b": None}, {"a": 2, "b": "x"}])
    assert path.read_text() == "a,b\n1,\n2,x\n"
    with pytest.raises(ValueError):
        write_dicts(tmp_path / "empty.csv", [])


def test_blocks_round_trip_exactly(tmp_path, rng):
    blocks = [("m", rng.standard_normal((2, 3))), ("v", rng.standard_normal(4)), ("s", np.array(2.5))]
    path = write_blocks(tmp_path / "blocks.csv", blocks, deterministic=False)
    read = read_blocks(path)
    assert_array_equal(read["m"], blocks[0][1])
    assert_array_equal(read["v"], blocks[1][1][:, None])
    assert_array_equal(read["s"], [[2.5]])


def test_truncated_block_file(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("block,m,2,2\n1.0,2.0\n")
    with pytest.raises(ValueError, match="truncated"):
        read_blocks(path)
    path.write_text("1.0,2.0\n")
    with pytest.raises(ValueError, match="block header"):
        read_blocks(path)
