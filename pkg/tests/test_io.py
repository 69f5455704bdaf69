"""File formats: PGM, .sino, JSON and CSV."""

import json

import numpy as np
import pytest

from wakescan.io import atomic_write, read_json, read_pgm, read_sino, write_csv, write_json, write_pgm, write_sino
from wakescan.transform import radon


def test_pgm_16bit_round_trip(tmp_path, rng):
    img = rng.integers(0, 65536, (13, 17)).astype(float)
    p = tmp_path / "a.pgm"
    write_pgm(p, img)
    assert p.read_bytes().startswith(b"P5\n17 13\n65535\n")
    assert np.array_equal(read_pgm(p), img)


def test_pgm_8bit_and_rounding(tmp_path):
    p = tmp_path / "b.pgm"
    write_pgm(p, np.array([[-3.0, 1.4], [1.6, 300.0]]), maxval=255)
    assert np.array_equal(read_pgm(p), [[0, 1], [2, 255]])


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x05\x07")
    assert np.array_equal(read_pgm(p), [[5, 7]])


def test_pgm_rejects_bad_files(tmp_path):
    p = tmp_path / "d.pgm"
    p.write_bytes(b"P2\n2 1\n255\n5 7")
    with pytest.raises(ValueError):
        read_pgm(p)
    p.write_bytes(b"P5\n2 2\n255\n\x05")
    with pytest.raises(ValueError):
        read_pgm(p)
    with pytest.raises(ValueError):
        write_pgm(p, np.array([[np.nan]]))


def test_sino_round_trip(tmp_path, rng):
    s = radon(rng.random((16, 16)), 30)
    p = tmp_path / "s.sino"
    write_sino(p, s)
    back = read_sino(p)
    assert back.size == 16
    assert back.grid.count == 30
    assert np.array_equal(back.values, s.values)
    p.write_bytes(b"JUNK" + p.read_bytes()[4:])
    with pytest.raises(ValueError):
        read_sino(p)


def test_json_infinity(tmp_path):
    p = tmp_path / "m.json"
    write_json(p, {"lr_plus": float("inf"), "x": np.float64(1.5), "v": np.arange(2)})
    assert json.loads(p.read_text()) == {"lr_plus": "inf", "x": 1.5, "v": [0, 1]}
    assert read_json(p)["x"] == 1.5


def test_csv_floats_round_trip(tmp_path):
    p = tmp_path / "r.csv"
    write_csv(p, ["a", "b"], [(0.1, 2), (1 / 3, 4)])
    lines = p.read_text().splitlines()
    assert lines[0] == "a,b"
    assert float(lines[2].split(",")[0]) == 1 / 3


def test_atomic_write_leaves_no_partial_file(tmp_path):
    p = tmp_path / "x.bin"
    p.write_bytes(b"old")
    with pytest.raises(RuntimeError):
        with atomic_write(p) as fh:
            fh.write(b"new")
            raise RuntimeError("boom")
    assert p.read_bytes() == b"old"
    assert [q.name for q in tmp_path.iterdir()] == ["x.bin"]
